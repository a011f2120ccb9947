//! Residual reports and their human and machine renderings.

use std::fmt::Write as _;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// Non-finite floats are written as strings so reports stay valid JSON.
mod lenient {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str(&v.to_string())
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }

    pub mod pair {
        use super::*;

        #[derive(Serialize, Deserialize)]
        struct Pair(#[serde(with = "super")] f64, #[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64; 2], s: S) -> Result<S::Ok, S::Error> {
            Pair(v[0], v[1]).serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[f64; 2], D::Error> {
            let Pair(a, b) = Pair::deserialize(d)?;
            Ok([a, b])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub id: String,
    pub anchor: String,
    pub jet_order: usize,
    #[serde(with = "lenient")]
    pub max_residual: f64,
    #[serde(with = "lenient")]
    pub scale: f64,
    pub tolerance: f64,
    /// `None` when the identity did not apply at any sampled point.
    pub pass: Option<bool>,
    pub evaluated: usize,
    pub skipped: usize,
}

impl IdentityRecord {
    pub fn status(&self) -> &'static str {
        match self.pass {
            Some(true) => "pass",
            Some(false) => "FAIL",
            None => "n/a",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSummary {
    #[serde(rename = "S_mean", with = "lenient")]
    pub s_mean: f64,
    #[serde(rename = "S_spread", with = "lenient")]
    pub s_spread: f64,
    #[serde(with = "lenient::pair")]
    pub umbilical_defect_range: [f64; 2],
    #[serde(with = "lenient::pair")]
    pub f_range: [f64; 2],
    #[serde(with = "lenient::pair")]
    pub mu_range: [f64; 2],
    /// Largest `|∇f|` in the metric `g`.
    #[serde(with = "lenient")]
    pub grad_f_max: f64,
    pub duchemin_attempts: usize,
    pub duchemin_failures: usize,
    /// Candidates replaced because a chart or frame was degenerate.
    pub resampled: usize,
    /// Points skipped by the distribution checks for small `|∇φ|`.
    pub distribution_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub seed: u64,
    pub jet_order: usize,
    pub points: usize,
    /// Not serialized: machine reports must be reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub surface: String,
    pub n: usize,
    pub metadata: Metadata,
    pub summary: SurfaceSummary,
    pub records: Vec<IdentityRecord>,
    /// Per-point failures of a pipeline stage, in point order.
    pub errors: Vec<String>,
    pub pass: bool,
}

impl ResidualReport {
    pub fn record(&self, id: &str) -> Option<&IdentityRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Human,
    Machine,
}

pub fn emit_report(r: &ResidualReport, format: Format) -> String {
    match format {
        Format::Machine => serde_json::to_string_pretty(r).expect("report serializes"),
        Format::Human => human(r),
    }
}

pub fn parse_machine(text: &str) -> Result<ResidualReport, serde_json::Error> {
    serde_json::from_str(text)
}

fn fmt_sci(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.3e}")
    } else {
        x.to_string()
    }
}

fn human(r: &ResidualReport) -> String {
    let mut out = String::new();
    let m = &r.metadata;
    let s = &r.summary;
    let _ = writeln!(
        out,
        "surface {} (n={})  points {}  seed {}  K {}  time {:.2}s",
        r.surface, r.n, m.points, m.seed, m.jet_order, m.wall_time_s
    );
    let _ = writeln!(
        out,
        "S = {:.9} (spread {})  f in [{:.6}, {:.6}]  umbilical defect in [{}, {}]  max |grad f| {}",
        s.s_mean,
        fmt_sci(s.s_spread),
        s.f_range[0],
        s.f_range[1],
        fmt_sci(s.umbilical_defect_range[0]),
        fmt_sci(s.umbilical_defect_range[1]),
        fmt_sci(s.grad_f_max)
    );
    let _ = writeln!(
        out,
        "duchemin failures {}/{}  resampled {}  distribution excluded {}",
        s.duchemin_failures, s.duchemin_attempts, s.resampled, s.distribution_excluded
    );
    let idw = r.records.iter().map(|x| x.id.len()).max().unwrap_or(2).max(2);
    let _ = writeln!(out, "{:<idw$}  {:>2}  {:>10}  {:>10}  {:>8}  {:>6}  {:>7}  anchor", "id", "K", "residual", "scale", "tol", "status", "points");
    for x in &r.records {
        let _ = writeln!(
            out,
            "{:<idw$}  {:>2}  {:>10}  {:>10}  {:>8.0e}  {:>6}  {:>3}/{:<3}  {}",
            x.id,
            x.jet_order,
            fmt_sci(x.max_residual),
            fmt_sci(x.scale),
            x.tolerance,
            x.status(),
            x.evaluated,
            x.evaluated + x.skipped,
            x.anchor
        );
    }
    for e in &r.errors {
        let _ = writeln!(out, "error: {e}");
    }
    let _ = writeln!(out, "{}", if r.pass { "PASS" } else { "FAIL" });
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResidualReport {
        ResidualReport {
            surface: "sphere".into(),
            n: 1,
            metadata: Metadata { seed: 7, jet_order: 4, points: 2, wall_time_s: 1.5 },
            summary: SurfaceSummary {
                s_mean: 2.0000000000000004,
                s_spread: 1e-15,
                umbilical_defect_range: [0.0, 1e-16],
                f_range: [1.0, 1.0],
                mu_range: [1.0, 1.0],
                grad_f_max: 0.0,
                duchemin_attempts: 2,
                duchemin_failures: 0,
                resampled: 0,
                distribution_excluded: 2,
            },
            records: vec![
                IdentityRecord {
                    id: "a".into(),
                    anchor: "x = y".into(),
                    jet_order: 4,
                    max_residual: 0.1 + 0.2,
                    scale: 1.0,
                    tolerance: 1e-6,
                    pass: Some(false),
                    evaluated: 2,
                    skipped: 0,
                },
                IdentityRecord {
                    id: "b".into(),
                    anchor: "z".into(),
                    jet_order: 5,
                    max_residual: f64::NAN,
                    scale: 1.0,
                    tolerance: 1e-5,
                    pass: None,
                    evaluated: 0,
                    skipped: 2,
                },
            ],
            errors: vec![],
            pass: false,
        }
    }

    #[test]
    fn machine_round_trip() {
        let r = sample();
        let back = parse_machine(&emit_report(&r, Format::Machine)).unwrap();
        assert_eq!(back.records[0], r.records[0]);
        assert!(back.records[1].max_residual.is_nan());
        assert_eq!(back.summary, r.summary);
        // wall time is deliberately not serialized
        assert_eq!(back.metadata.wall_time_s, 0.0);
    }

    #[test]
    fn human_lists_every_identity_with_anchor() {
        let text = emit_report(&sample(), Format::Human);
        assert!(text.contains("x = y") && text.contains("n/a") && text.contains("FAIL"));
    }
}
