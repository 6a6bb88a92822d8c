//! LDPC-coded 64-QAM over AWGN: coded and uncoded bit error rates.
//!
//! cargo run --release --example ldpc_qam

use csi_ddpm::link::{LdpcCode, Qam};
use csi_ddpm::rng::{complex_normal, rng_from};
use num_complex::Complex64;
use rand::Rng;

fn main() -> csi_ddpm::Result<()> {
    let code = LdpcCode::link_default();
    let qam = Qam::new(64)?;
    println!("LDPC n = {}, k = {}, rate {:.3}", code.n(), code.k(), code.rate());
    let mut rng = rng_from(5);
    let one = Complex64::new(1.0, 0.0);
    println!("{:>8} {:>12} {:>12}", "snr dB", "uncoded", "coded");
    for snr_db in [8.0, 10.0, 12.0, 14.0] {
        let nv = 10f64.powf(-snr_db / 10.0);
        let (mut raw_err, mut err, mut total) = (0usize, 0usize, 0usize);
        for _ in 0..40 {
            let info: Vec<u8> = (0..code.k()).map(|_| rng.gen_range(0..2)).collect();
            // 1296 coded bits fill exactly 216 symbols.
            let cw = code.encode(&info)?;
            assert!(code.check(&cw));
            let mut llr = Vec::with_capacity(cw.len());
            let mut hard = Vec::with_capacity(cw.len());
            for x in qam.modulate(&cw)? {
                let y = x + complex_normal(&mut rng) * nv.sqrt();
                qam.soft_demap_into(y, one, nv, &mut llr);
                qam.hard_demap(y, &mut hard);
            }
            raw_err += cw.iter().zip(&hard).filter(|(a, b)| a != b).count();
            let dec = code.decode(&llr)?;
            err += dec.info.iter().zip(&info).filter(|(a, b)| a != b).count();
            total += info.len();
        }
        println!(
            "{snr_db:>8} {:>12.3e} {:>12.3e}",
            raw_err as f64 / (40 * 1296) as f64,
            err as f64 / total as f64
        );
    }
    Ok(())
}
