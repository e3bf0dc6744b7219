//! Character n-gram F-score, the feedback disparity it yields, and the
//! correlation between disparity and improvement.

use std::error::Error;

use dual_reflect::metrics::{chrf, delta_c, delta_d, pearson, Chrf, DisparityRecord};

pub fn run_example() -> Result<f64, Box<dyn Error>> {
    let pairs = [
        ("The cat sat on the mat.", "The cat sat on the mat."),
        ("The cat sat on a mat.", "The cat sat on the mat."),
        ("A cat is sitting on the rug.", "The cat sat on the mat."),
    ];
    for (hyp, reference) in pairs {
        println!("{:6.2}  {hyp}", chrf(hyp, reference)?.value);
    }

    // How far the back-translation drifted from the source.
    let source = "他们吃了苹果。";
    for back in ["他们吃了苹果。", "他们吃苹果。", "苹果被吃了。"] {
        println!("ΔD = {:6.2}  {back}", delta_d(source, back, &Chrf)?);
    }

    let records = [(12.0, 0.8), (30.0, 2.1), (45.0, 3.9), (61.0, 4.2)]
        .into_iter()
        .enumerate()
        .map(|(i, (d, c))| DisparityRecord {
            task_id: format!("seg{:05}", i + 1),
            delta_d: d,
            delta_c: c,
            iteration_observed: 1,
        })
        .collect::<Vec<_>>();
    let r = pearson(&records)?;
    println!("pearson r(ΔD, ΔC) = {r:.4}");

    let ours = chrf("He passed away.", "He passed away.")?;
    let baseline = chrf("He kicked the bucket.", "He passed away.")?;
    println!("ΔC = {:.2}", delta_c(&ours, &baseline)?);
    Ok(r)
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example().map(|_| ())
}
