//! Regression report over the two reference demand matrices.

use std::fmt;

use subgen_core::idnc::{build_graph, solve_exact};
use subgen_core::model::{fixture_f1, fixture_f2, StateFeedbackMatrix};
use subgen_core::partition::{analytic_metrics, partition_classic, partition_direct, AnalyticMetrics};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixtureCheck {
    pub fixture: &'static str,
    pub quantity: String,
    pub value: String,
    pub expected: String,
}

impl FixtureCheck {
    pub fn passed(&self) -> bool {
        self.value == self.expected
    }
}

impl fmt::Display for FixtureCheck {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<4} {:<28} {:>24} {:>24}  {}",
            self.fixture,
            self.quantity,
            self.value,
            self.expected,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

fn check(fixture: &'static str, quantity: &str, value: impl ToString, expected: impl ToString) -> FixtureCheck {
    FixtureCheck {
        fixture,
        quantity: quantity.to_string(),
        value: value.to_string(),
        expected: expected.to_string(),
    }
}

fn fraction(m: &AnalyticMetrics) -> String {
    format!("{}/{}", m.delay_sum, m.total_targets)
}

fn metrics_at(sfm: &StateFeedbackMatrix, g: Option<usize>, classic: bool) -> AnalyticMetrics {
    let sol = solve_exact(&build_graph(sfm), sfm).expect("fixtures are small");
    let g = g.unwrap_or(sol.cardinality());
    let p = if classic {
        partition_classic(sfm, g).expect("valid size")
    } else {
        partition_direct(&sol, g, sfm).expect("valid size")
    };
    analytic_metrics(&p, sfm)
}

/// Every fixture metric beside its expected value.
pub fn run_fixture_report() -> Vec<FixtureCheck> {
    let mut out = Vec::new();

    let f2 = fixture_f2();
    let rlnc = metrics_at(&f2, None, false);
    let idnc = metrics_at(&f2, Some(1), false);
    out.push(check("F2", "U_RLNC", rlnc.u_g, 2));
    out.push(check("F2", "D_RLNC", format!("{:.1}", rlnc.d_g), "2.0"));
    out.push(check("F2", "U_IDNC", idnc.u_g, 4));
    out.push(check("F2", "D_IDNC", format!("{:.1}", idnc.d_g), "2.5"));

    let f1 = fixture_f1();
    let sol = solve_exact(&build_graph(&f1), &f1).expect("fixtures are small");
    let mut sets = sol.packet_id_sets();
    sets.sort();
    let render = |sets: &[Vec<usize>]| {
        sets.iter()
            .map(|s| format!("{{{}}}", s.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")))
            .collect::<Vec<_>>()
            .join("")
    };
    out.push(check("F1", "U_IDNC", sol.cardinality(), 4));
    out.push(check("F1", "IDNC sets", render(&sets), "{1,5}{1,6}{2,3,7}{4,8}"));
    out.push(check("F1", "D_IDNC", fraction(&metrics_at(&f1, Some(1), false)), "32/14"));
    let rlnc = metrics_at(&f1, None, false);
    out.push(check("F1", "U_RLNC", rlnc.u_g, 4));
    out.push(check("F1", "D_RLNC", fraction(&rlnc), "50/14"));
    let g2 = metrics_at(&f1, Some(2), false);
    out.push(check("F1", "U_g (g=2)", g2.u_g, 4));
    out.push(check("F1", "D_g (g=2)", fraction(&g2), "38/14"));
    out.push(check("F1", "U_g (classic g=4)", metrics_at(&f1, Some(4), true).u_g, 7));
    out
}

/// The report as an aligned text table.
pub fn render_report(checks: &[FixtureCheck]) -> String {
    let mut s = format!("{:<4} {:<28} {:>24} {:>24}  result\n", "fix", "quantity", "value", "expected");
    for c in checks {
        s.push_str(&c.to_string());
        s.push('\n');
    }
    s
}
