use qclab::surface::catalog;
use qclab::verify::report::{emit_report, parse_machine, Format};
use qclab::verify::{run_suite, SuiteSpec};

fn spec(name: &str, points: usize, seed: u64) -> SuiteSpec {
    let mut s = SuiteSpec::new(catalog(name, 1).unwrap());
    s.points = points;
    s.seed = seed;
    s
}

#[test]
fn machine_report_round_trips() {
    let r = run_suite(&spec("hyperboloid", 3, 11)).unwrap();
    let text = emit_report(&r, Format::Machine);
    let mut back = parse_machine(&text).unwrap();
    back.metadata.wall_time_s = r.metadata.wall_time_s;
    assert_eq!(back, r);
    // field order is part of the format
    let keys = ["\"surface\"", "\"n\"", "\"metadata\"", "\"summary\"", "\"records\"", "\"errors\"", "\"pass\""];
    // "pass" also appears inside records; the top-level one comes last
    let pos: Vec<usize> = keys.iter().map(|k| text.rfind(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn reports_are_reproducible() {
    let a = emit_report(&run_suite(&spec("ellipsoid", 4, 3)).unwrap(), Format::Machine);
    let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
    let b = pool.install(|| emit_report(&run_suite(&spec("ellipsoid", 4, 3)).unwrap(), Format::Machine));
    assert_eq!(a, b);
    let c = emit_report(&run_suite(&spec("ellipsoid", 4, 4)).unwrap(), Format::Machine);
    assert_ne!(a, c);
}

#[test]
fn pass_flag_matches_records() {
    let r = run_suite(&spec("heisenberg", 3, 5)).unwrap();
    for rec in &r.records {
        if let Some(p) = rec.pass {
            assert_eq!(p, rec.max_residual < rec.tolerance * rec.scale, "{}", rec.id);
        }
    }
    assert_eq!(r.pass, r.records.iter().all(|x| x.pass != Some(false)));
    assert_eq!(r.record("lc.eqlv1").unwrap().pass, None);
    assert_eq!(r.record("curv.flat").unwrap().pass, Some(true));
}
