//! Physical constants (CODATA 2018) and species data for C70.

/// Reduced Planck constant in eV s.
pub const HBAR_EV_S: f64 = 6.582_119_569e-16;
/// Planck constant in J s.
pub const H_J_S: f64 = 6.626_070_15e-34;
/// Speed of light in m/s.
pub const C_M_S: f64 = 299_792_458.0;
/// Boltzmann constant in eV/K.
pub const KB_EV_K: f64 = 8.617_333_262e-5;
/// Boltzmann constant in J/K.
pub const KB_J_K: f64 = 1.380_649e-23;
/// Elementary charge in C (J per eV).
pub const EV_J: f64 = 1.602_176_634e-19;
/// Atomic mass unit in kg.
pub const AMU_KG: f64 = 1.660_539_066_60e-27;

/// Square centimetres to square metres.
pub const CM2_TO_M2: f64 = 1e-4;

/// Mass of C70 in atomic mass units.
pub const C70_MASS_AMU: f64 = 840.0;
/// Vibrational heat capacity of C70 in units of k_B.
pub const C70_HEAT_CAPACITY_KB: f64 = 202.0;
/// HOMO-LUMO gap of C70 in eV.
pub const C70_GAP_EV: f64 = 1.6;
/// Ionization potential of ground-state C70 in eV.
pub const C70_IONIZATION_POTENTIAL_EV: f64 = 7.6;
/// Energy of the metastable triplet T1 above the ground state, in eV.
pub const C70_TRIPLET_ENERGY_EV: f64 = 1.6;

/// Mass of C70 in kg.
pub fn c70_mass_kg() -> f64 {
    C70_MASS_AMU * AMU_KG
}

/// Default C70 heat capacity in eV/K.
pub fn c70_heat_capacity() -> f64 {
    C70_HEAT_CAPACITY_KB * KB_EV_K
}

/// Photon energy in eV for a vacuum wavelength in metres.
pub fn photon_energy_ev(wavelength: f64) -> f64 {
    H_J_S * C_M_S / (wavelength * EV_J)
}

/// Angular frequency (rad/s) of a photon of energy `energy_ev`.
pub fn omega_from_ev(energy_ev: f64) -> f64 {
    energy_ev / HBAR_EV_S
}

/// de Broglie wavelength in metres of a particle of mass `mass_kg` moving at `velocity`.
pub fn de_broglie_wavelength(mass_kg: f64, velocity: f64) -> f64 {
    H_J_S / (mass_kg * velocity)
}
