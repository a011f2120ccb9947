use std::process::Command;

use qclab::verify::report::parse_machine;

fn qclab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_qclab")).args(args).output().expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn catalog_lists_surfaces() {
    let (code, out, _) = qclab(&["catalog"]);
    assert_eq!(code, 0);
    for name in ["sphere", "heisenberg", "hyperboloid", "ellipsoid"] {
        assert!(out.contains(name));
    }
}

#[test]
fn check_passes_and_emits_parseable_json() {
    let (code, out, err) = qclab(&["check", "sphere", "--points", "3", "--machine"]);
    assert_eq!(code, 0, "{err}");
    let r = parse_machine(&out).expect("machine output parses");
    assert!(r.pass);
    assert_eq!(r.metadata.points, 3);
    assert!((r.summary.s_mean - 2.0).abs() < 1e-9);
}

#[test]
fn human_table_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.txt");
    let p = path.to_str().unwrap();
    let (code, out, _) = qclab(&["check", "heisenberg", "--points", "2", "--only", "curv.,pde.eqbi3", "--output", p]);
    assert_eq!(code, 0);
    assert!(out.contains("curv.flat") && out.contains("pde.eqbi3") && !out.contains("cal.df_xi"));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), out);
}

#[test]
fn failing_identity_exits_one() {
    let (code, out, _) = qclab(&["check", "ellipsoid", "--points", "2", "--only", "pde.eqbi1", "--tol", "1e-30"]);
    assert_eq!(code, 1);
    assert!(out.contains("FAIL"));
}

#[test]
fn input_errors_exit_two() {
    assert_eq!(qclab(&["check", "no-such-surface"]).0, 2);
    assert_eq!(qclab(&["check", "sphere", "--jet-order", "9"]).0, 2);
    assert_eq!(qclab(&["check", "sphere", "--only", "bogus.id"]).0, 2);
    assert_eq!(qclab(&["check", "sphere", "--tol-for", "nonsense"]).0, 2);
    assert_eq!(qclab(&["frobnicate"]).0, 2);
}

#[test]
fn surface_spec_files() {
    let dir = tempfile::tempdir().unwrap();
    // a sphere of radius 2 given as a spec file
    let mut a = vec![0.0; 64];
    for i in 0..8 {
        a[i * 8 + i] = 1.0;
    }
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(", ");
    let sphere = format!("name = \"big-sphere\"\nn = 1\nA = [{}]\nb = [{}]\nc = -4.0\n", fmt(&a), fmt(&[0.0; 8]));
    let path = dir.path().join("big.toml");
    std::fs::write(&path, sphere).unwrap();
    let (code, out, err) = qclab(&["check", path.to_str().unwrap(), "--points", "2", "--machine"]);
    assert_eq!(code, 0, "{err}");
    assert!(parse_machine(&out).unwrap().pass);

    // not quaternionic-invariant: rejected as an input error
    for (i, v) in [1.0, 2.0, 3.0, 4.0].iter().enumerate() {
        a[i * 8 + i] = *v;
    }
    let skew = format!("name = \"skewed\"\nn = 1\nA = [{}]\nb = [{}]\nc = -1.0\n", fmt(&a), fmt(&[0.0; 8]));
    let path = dir.path().join("skew.toml");
    std::fs::write(&path, skew).unwrap();
    let (code, _, err) = qclab(&["check", path.to_str().unwrap(), "--points", "5"]);
    assert_eq!(code, 2);
    assert!(err.contains("not a qc-hypersurface"), "{err}");

    let path = dir.path().join("broken.toml");
    std::fs::write(&path, "name = 3").unwrap();
    assert_eq!(qclab(&["check", path.to_str().unwrap()]).0, 2);
}
