//! Prints the calibrated default cross section as CSV.

fn main() -> hotmol::Result<()> {
    let (model, _) = hotmol::spectra::EmitterModel::calibrated_default()?;
    print!("{}", model.cross_section.to_csv());
    Ok(())
}
