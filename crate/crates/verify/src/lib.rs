//! Acceptance harness: maps each verification criterion to the presets and
//! check records that decide it, and renders one verdict line per criterion.

use std::collections::HashMap;
use std::time::Instant;

use greenlab::config::ExperimentConfig;
use greenlab::experiments;
use greenlab::report::CheckRecord;

pub struct Criterion {
    pub id: u8,
    pub title: &'static str,
    pub presets: &'static [&'static str],
    /// Suffix of the check names that count; empty takes every check.
    pub suffix: &'static str,
    /// Wall-clock limit per preset, in seconds.
    pub time_limit: Option<f64>,
}

pub const CRITERIA: &[Criterion] = &[
    Criterion {
        id: 1,
        title: "d=3 decay exponent of G",
        presets: &["laplace3d", "trig3d"],
        suffix: "/g",
        time_limit: Some(120.0),
    },
    Criterion {
        id: 2,
        title: "d=2 logarithmic bound",
        presets: &["laplace2d", "trig2d"],
        suffix: "/g_log",
        time_limit: Some(60.0),
    },
    Criterion {
        id: 3,
        title: "gradient exponent",
        presets: &["laplace2d", "trig2d", "laplace3d", "trig3d"],
        suffix: "/grad",
        time_limit: None,
    },
    Criterion {
        id: 4,
        title: "mixed-derivative exponent",
        presets: &["laplace2d", "trig2d"],
        suffix: "/mixed",
        time_limit: None,
    },
    Criterion {
        id: 5,
        title: "domain monotonicity and planar drift",
        presets: &["monotone2d", "monotone3d"],
        suffix: "",
        time_limit: None,
    },
    Criterion {
        id: 6,
        title: "adjoint identity",
        presets: &["adjoint"],
        suffix: "",
        time_limit: None,
    },
    Criterion {
        id: 7,
        title: "weak-Lebesgue norms and embedding",
        presets: &["lorentz"],
        suffix: "",
        time_limit: None,
    },
    Criterion {
        id: 8,
        title: "uniformity in R and in the source",
        presets: &["uniform2d", "uniform3d"],
        suffix: "",
        time_limit: None,
    },
    Criterion {
        id: 9,
        title: "dimension lifting",
        presets: &["lift_identity", "lift_trig"],
        suffix: "",
        time_limit: Some(300.0),
    },
    Criterion {
        id: 10,
        title: "iterative versus dense Green matrices",
        presets: &["oracle2d", "oracle3d"],
        suffix: "",
        time_limit: None,
    },
    Criterion {
        id: 11,
        title: "interior gradient ratio",
        presets: &["ratio2d", "ratio3d"],
        suffix: "",
        time_limit: None,
    },
];

pub struct Verdict {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub checks: Vec<CheckRecord>,
    pub seconds: f64,
    pub notes: Vec<String>,
}

impl Verdict {
    pub fn line(&self) -> String {
        let mut parts: Vec<String> = self.checks.iter().map(summary).collect();
        parts.extend(self.notes.iter().cloned());
        format!(
            "criterion {:>2} {} {} ({:.1}s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            parts.join("; ")
        )
    }
}

fn number(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.2e}")
    } else {
        format!("{x:.4}")
    }
}

/// Short rendering of the numeric headline values of a check.
pub fn summary(c: &CheckRecord) -> String {
    const KEYS: &[&str] = &[
        "exponent",
        "raw_exponent",
        "slope",
        "rms_over_mean",
        "min_relative_increment",
        "max_transpose_gap",
        "max_oracle_gap",
        "max_abs_difference",
        "holds",
        "weak_norm",
        "corrected",
        "inverted",
        "spread_g",
        "spread_grad",
        "spread_mixed",
        "spread_weak",
        "spread_over_radii",
        "max_relative_discrepancy",
        "fitted_exponent",
        "quadrature_rel_error",
        "variation",
        "ratio",
    ];
    let mut fields = Vec::new();
    match &c.measured {
        serde_json::Value::Object(m) => {
            for k in KEYS {
                if let Some(v) = m.get(*k) {
                    fields.push(match v.as_f64() {
                        Some(x) => format!("{k}={}", number(x)),
                        None => format!("{k}={v}"),
                    });
                }
            }
        }
        serde_json::Value::Array(a) => {
            let xs: Vec<String> = a.iter().filter_map(|v| v.as_f64()).map(number).collect();
            fields.push(format!("[{}]", xs.join(",")));
        }
        _ => {}
    }
    format!(
        "{}{} {}",
        c.name,
        if c.passed { "" } else { " (failed)" },
        fields.join(" ")
    )
}

/// Runs presets once each and evaluates every criterion.
#[derive(Default)]
pub struct Harness {
    runs: HashMap<&'static str, Result<(Vec<CheckRecord>, f64), String>>,
}

impl Harness {
    fn run_preset(&mut self, name: &'static str) -> &Result<(Vec<CheckRecord>, f64), String> {
        self.runs.entry(name).or_insert_with(|| {
            let start = Instant::now();
            ExperimentConfig::preset(name)
                .and_then(|cfg| experiments::run(&cfg))
                .map(|checks| (checks, start.elapsed().as_secs_f64()))
                .map_err(|e| e.to_string())
        })
    }

    pub fn evaluate(&mut self, c: &Criterion) -> Verdict {
        let mut checks = Vec::new();
        let mut notes = Vec::new();
        let mut seconds = 0.0;
        let mut passed = true;
        for &p in c.presets {
            match self.run_preset(p) {
                Ok((records, secs)) => {
                    seconds += secs;
                    if let Some(limit) = c.time_limit {
                        if *secs > limit {
                            passed = false;
                            notes.push(format!("{p} took {secs:.1}s, limit {limit}s"));
                        }
                    }
                    checks.extend(records.iter().filter(|r| r.name.ends_with(c.suffix)).cloned());
                }
                Err(e) => {
                    passed = false;
                    notes.push(format!("{p}: error: {e}"));
                }
            }
        }
        if checks.is_empty() {
            passed = false;
            notes.push("no checks selected".into());
        }
        passed &= checks.iter().all(|r| r.passed);
        Verdict {
            id: c.id,
            title: c.title,
            passed,
            checks,
            seconds,
            notes,
        }
    }
}
