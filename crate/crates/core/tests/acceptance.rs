//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! `cargo test --test acceptance -- 3 7` runs only the listed criteria.

use fpsusy::acceptance::{run_criterion, AcceptanceOptions};

fn main() {
    let picked: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).filter(|id| (1..=10).contains(id)).collect();
    let ids: Vec<u32> = if picked.is_empty() { (1..=10).collect() } else { picked };
    let opts = AcceptanceOptions::default();
    let mut failed = 0;
    for id in ids {
        let r = run_criterion(id, &opts);
        let verdict = if r.passed { "PASS" } else { "FAIL" };
        println!("{verdict} criterion {id:>2}: {} ({:.1} s)", r.title, r.seconds);
        for c in &r.checks {
            let mark = if c.passed { "ok" } else { "!!" };
            println!("        {mark} {}: {:.3e} (limit {:.3e})", c.name, c.measured, c.tolerance);
        }
        if let (Some(budget), false) = (r.time_budget, r.seconds <= r.time_budget.unwrap_or(f64::INFINITY)) {
            println!("        !! over the {budget} s budget");
        }
        if let Some(e) = &r.error {
            println!("        !! error: {e}");
        }
        failed += usize::from(!r.passed);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
