// Sends a Gaussian sample by its candidate index and recovers it on the
// decoder side from the index alone.

use fgvc::rcc::{
    budget_for_kl, code_seed_index, decode_seed_index, kl_bits, pfr_decode, pfr_encode, BitReader, BitWriter,
    GaussianPair,
};
use fgvc::rng::{Domain, StreamKey};

pub struct PfrRoundtrip {
    pub kl_bits: f64,
    pub index: u64,
    pub coded_bits: u64,
    pub identical: bool,
}

pub fn run_example() -> Result<PfrRoundtrip, Box<dyn std::error::Error>> {
    let mu_q = [0.9, -0.4, 0.3, 0.1];
    let mu_p = [0.0; 4];
    let pair = GaussianPair::new(&mu_q, &mu_p, 0.25)?;
    let kl = kl_bits(&pair)?;
    let key = StreamKey::new(7, Domain::Candidate).gop(0).step(1).chunk(0);

    let sent = pfr_encode(&pair.scorer(), key, budget_for_kl(kl))?;
    let mut w = BitWriter::new();
    code_seed_index(&mut w, sent.index)?;
    let coded_bits = w.bit_len();
    let bytes = w.finish();

    let index = decode_seed_index(&mut BitReader::new(&bytes))?;
    let received = pfr_decode(index, &pair.proposal(), key)?;
    Ok(PfrRoundtrip {
        kl_bits: kl,
        index,
        coded_bits,
        identical: received == sent.sample,
    })
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = run_example()?;
    println!(
        "KL {:.3} bits, index {}, {} coded bits",
        r.kl_bits, r.index, r.coded_bits
    );
    println!("decoder sample identical: {}", r.identical);
    Ok(())
}
