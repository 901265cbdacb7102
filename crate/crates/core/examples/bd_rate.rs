// Bjøntegaard rate and quality deltas between two rate-quality curves.

use fgvc::metrics::{bd_metric, bd_rate, RateQualityCurve};

pub fn run_example() -> Result<(f64, f64), Box<dyn std::error::Error>> {
    let anchor = RateQualityCurve::new("ms_ssim", vec![(0.05, 0.80), (0.1, 0.86), (0.2, 0.91), (0.4, 0.95)]);
    let test = RateQualityCurve::new("ms_ssim", anchor.points.iter().map(|&(r, q)| (0.5 * r, q)).collect());
    let rate = bd_rate(&anchor, &test)?.value().ok_or("curves do not overlap")?;
    let metric = bd_metric(&anchor, &test)?.value().ok_or("curves do not overlap")?;
    Ok((rate, metric))
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (rate, metric) = run_example()?;
    println!("BD-rate {rate:.2}%, BD-MS-SSIM {metric:+.4}");
    Ok(())
}
