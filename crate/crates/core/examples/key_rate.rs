//! Asymptotic secret key from sifted-key statistics, with the tabulated
//! error-correction efficiency.

use fsqkd::keyrate::{binary_entropy, secret_fraction, secret_key_from_counts, ErrorCorrectionModel};

fn main() -> fsqkd::error::Result<()> {
    let ec = ErrorCorrectionModel::default();
    println!("   e      h(e)    f(e)   fraction");
    for e in [0.01, 0.03, 0.043, 0.0551, 0.08, 0.1] {
        println!(
            "{e:6.4}  {:.4}  {:.4}  {:+.4}",
            binary_entropy(e)?,
            ec.f(e),
            secret_fraction(e, &ec)?
        );
    }

    // 259,855 sifted bits with 5.51% errors, then the SNRF-kept subset.
    for (raw, sifted, errors) in [(520_000, 259_855, 14_318), (452_000, 226_279, 9_730)] {
        let r = secret_key_from_counts(raw, sifted, errors, &ec)?;
        println!("{}", r.to_json()?);
    }
    Ok(())
}
