// Decodes an overlapped encode with and without latent fusion and compares
// frame-difference jumps at GOP seams.

use fgvc::metrics::{boundary_discontinuity, seam_frames};
use fgvc::pipeline::{decode_video, encode_video, segment_gops, CodecParams, DecodeOptions, TStarPolicy};
use fgvc::synthetic::moving_texture;

pub struct FusionComparison {
    pub fused: f64,
    pub unfused: f64,
}

pub fn run_example() -> Result<FusionComparison, Box<dyn std::error::Error>> {
    let video = moving_texture(20, 16, 16, (0.0, 0.5), 0.15, 3);
    let params = CodecParams {
        gop_len: 8,
        steps: 64,
        beta_start: 2e-3,
        beta_end: 0.2,
        ..Default::default()
    };
    let (encoded, _) = encode_video(&video, &params, &TStarPolicy::Fixed(8))?;
    let gops = segment_gops(
        video.frames(),
        params.gop_len,
        params.overlap,
        params.transform.temporal,
    )?;
    let seams = seam_frames(&gops, true);
    let score = |fusion| -> Result<f64, Box<dyn std::error::Error>> {
        let decoded = decode_video(
            &encoded,
            DecodeOptions {
                fusion,
                ..Default::default()
            },
        )?;
        Ok(boundary_discontinuity(&decoded, &seams)?)
    };
    Ok(FusionComparison {
        fused: score(true)?,
        unfused: score(false)?,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let c = run_example()?;
    println!("boundary discontinuity: fused {:.4}, unfused {:.4}", c.fused, c.unfused);
    Ok(())
}
