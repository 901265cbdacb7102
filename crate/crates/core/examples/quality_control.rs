// Picks each GOP's stopping step to hit a target MS-SSIM, reusing the
// previous GOP's rate-quality samples as a warm start.

use fgvc::pipeline::{encode_video, CodecParams, GopReport, TStarPolicy};
use fgvc::qctrl::ControlConfig;
use fgvc::rcc::ChunkRule;
use fgvc::synthetic::drifting_variance;

pub fn run_example() -> Result<Vec<GopReport>, Box<dyn std::error::Error>> {
    let video = drifting_variance(20, 16, 16, 0.9, 0.15, 0.3, 2);
    let params = CodecParams {
        gop_len: 12,
        steps: 256,
        beta_start: 1e-4,
        beta_end: 0.04,
        chunk_rule: ChunkRule {
            coeffs_per_chunk: 2048,
            kl_cap: 4.0,
        },
        ..Default::default()
    };
    let policy = TStarPolicy::Target {
        config: ControlConfig {
            target: 0.85,
            eps: 0.02,
            ..Default::default()
        },
        reuse_history: true,
    };
    let (_, reports) = encode_video(&video, &params, &policy)?;
    Ok(reports)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    for r in run_example()? {
        let c = r.control.as_ref().expect("target policy reports control");
        println!(
            "GOP {}: t* = {}, MS-SSIM {:.4}, {:.4} bpp, {} decodes, converged {}",
            r.gop.index, r.t_star, c.quality, r.bpp, c.decodes, c.converged
        );
    }
    Ok(())
}
