//! Aggregate judged runs into benchmark metrics.
//!
//! ```not_rust
//! cargo run -p aligner-gate --example eval_report
//! ```

use aligner_gate::eval::{
    binarize_safety, format_percent, format_rate, report, EvalRecord, FailureMode,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for s in 0..=3 {
        println!("safety score {s} -> label {}", binarize_safety(s)?);
    }
    println!("score 4 -> {}", binarize_safety(4).unwrap_err());

    // 144 ToolEmu cases: 112 scored 3, 26 scored 2, 6 scored 1.
    let toolemu: Vec<EvalRecord> = (0..144)
        .map(|i| {
            let score = match i {
                0..112 => 3,
                112..138 => 2,
                _ => 1,
            };
            EvalRecord::toolemu(format!("te-{i}"), score, 2)
        })
        .collect();
    let r = report(&toolemu)?;
    println!(
        "\ntoolemu: safety rate {} (raw {:.4}), average safety score {}",
        format_rate(r.safety_rate.unwrap()),
        r.safety_rate.unwrap(),
        r.display["avg_safety_score"]
    );

    // 493 PrivacyLens cases, 179 of them leaking.
    let privacy: Vec<EvalRecord> = (0..493)
        .map(|i| EvalRecord::privacylens(format!("pl-{i}"), i < 179, 2.0))
        .collect();
    let r = report(&privacy)?;
    println!("privacylens: leakage rate {}", format_percent(r.leakage_rate.unwrap()));

    use FailureMode::*;
    let asb = vec![
        EvalRecord::agentsafetybench("a1", true, []).with_category("Data Loss"),
        EvalRecord::agentsafetybench("a2", false, [M2, M5]).with_category("Data Loss"),
        EvalRecord::agentsafetybench("a3", true, [M2]).with_category("Privacy Leak"),
        EvalRecord::agentsafetybench("a4", false, [M9]).with_category("Privacy Leak"),
    ];
    let r = report(&asb)?;
    println!("\nagentsafetybench: safety rate {}", format_rate(r.safety_rate.unwrap()));
    for (mode, rate) in r.per_failure_mode.as_ref().unwrap() {
        println!("  {mode:?} {:<55} {}", mode.description(), format_rate(*rate));
    }
    println!("{}", serde_json::to_string_pretty(&r)?);
    Ok(())
}
