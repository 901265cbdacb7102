// Codes one GOP's trajectory once and decodes it at several stopping steps.
// Later stops cost more bits and reconstruct more detail.

use fgvc::metrics::mse;
use fgvc::pipeline::{segment_gops, CodecParams, GopSession};
use fgvc::synthetic::gaussian_sequence;

/// Stopping step, bits per pixel and MSE.
pub type Point = (usize, f64, f64);

pub fn run_example() -> Result<Vec<Point>, Box<dyn std::error::Error>> {
    let video = gaussian_sequence(8, 16, 16, 0.9, 0.15, 1);
    let params = CodecParams {
        gop_len: 8,
        steps: 64,
        beta_start: 2e-3,
        beta_end: 0.2,
        ..Default::default()
    };
    let sched = params.schedule()?;
    let gop = segment_gops(
        video.frames(),
        params.gop_len,
        params.overlap,
        params.transform.temporal,
    )?[0];
    let stops = [48, 32, 16, 8, 4, 1];
    let session = GopSession::new(&video, gop, &params, &sched, *stops.last().unwrap())?;
    let mut out = Vec::new();
    for t in stops {
        let decoded = session.decode_frames(t)?;
        out.push((t, session.bpp_at(t), mse(&video, &decoded)?));
    }
    Ok(out)
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    println!("t*    bpp       mse");
    for (t, bpp, err) in run_example()? {
        println!("{t:<5} {bpp:<9.4} {err:.6}");
    }
    Ok(())
}
