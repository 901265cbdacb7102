// Writes a clip as Y4M, encodes it into a self-describing bitstream, and
// decodes the bitstream back to Y4M.

use fgvc::bitstream::{read_container, write_container};
use fgvc::io::{read_video, write_video};
use fgvc::metrics::psnr;
use fgvc::pipeline::{decode_video, encode_video, CodecParams, DecodeOptions, TStarPolicy};
use fgvc::synthetic::gaussian_sequence;

pub struct ContainerRoundtrip {
    pub bitstream_bytes: usize,
    pub psnr_db: f64,
    pub y4m_identical: bool,
}

pub fn run_example() -> Result<ContainerRoundtrip, Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let source = dir.path().join("clip.y4m");
    write_video(&source, &gaussian_sequence(8, 16, 16, 0.8, 0.15, 4))?;
    let video = read_video(&source)?;

    let params = CodecParams {
        gop_len: 8,
        steps: 64,
        beta_start: 2e-3,
        beta_end: 0.2,
        ..Default::default()
    };
    let (encoded, _) = encode_video(&video, &params, &TStarPolicy::Fixed(4))?;
    let bytes = write_container(&encoded)?;
    let decoded = decode_video(&read_container(&bytes, None)?, DecodeOptions::default())?;

    let out = dir.path().join("decoded.y4m");
    write_video(&out, &decoded)?;
    let reread = read_video(&out)?;
    Ok(ContainerRoundtrip {
        bitstream_bytes: bytes.len(),
        psnr_db: psnr(&video, &reread)?,
        y4m_identical: std::fs::read(&out)? == fgvc::io::write_y4m(&fgvc::io::Y4mFile::new(reread))?,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = run_example()?;
    println!("{} byte bitstream, {:.2} dB PSNR", r.bitstream_bytes, r.psnr_db);
    println!("Y4M rewrite identical: {}", r.y4m_identical);
    Ok(())
}
