//! Fixtures shared by the benchmarks.

use qtraj::biprism::{Biprism, BiprismGeometry, GaussianBeam};
use qtraj::schrodinger1d::{find_bound_energies, solve_pair, PhysicalSystem1D, WaveBasis1D};

/// Reference biprism with the two-component beam centred on the filament.
pub fn reference_biprism() -> Biprism {
    Biprism::new(BiprismGeometry::default(), GaussianBeam::two_component(0.0)).expect("reference geometry is valid")
}

/// Solution pair of harmonic-oscillator level `n` (ħ = m = ω = 1) on a box
/// trimmed to a fixed forbidden-region action.
pub fn harmonic_basis(n: usize, points: usize) -> WaveBasis1D {
    let big = PhysicalSystem1D::harmonic(1.0, 1.0, 1.0, n as f64 + 1.0).expect("valid oscillator");
    let sys = big.trimmed(n as f64 + 0.5, 6.0).expect("level lies inside the box");
    let top = sys.v(sys.x_max).min(sys.v(sys.x_min)) * 0.999;
    let e = find_bound_energies(&sys, n + 1, 0.0, top).expect("levels found")[n];
    solve_pair(&sys, e, points).expect("pair solves")
}
