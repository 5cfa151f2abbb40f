//! Shared fixtures for the integration tests: seeded random Fuchsian
//! systems and the workhorse r=2, n=4 configuration.

use iml_core::matrix::{c, frob, CMat, C64};
use iml_core::parabolic::{ExponentData, FuchsianSystem, ParabolicConnection};
use iml_core::MarkedSphere;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Four real punctures and a basepoint below them, chosen so the whole
/// `t_4: 3 -> 3+i` deformation keeps the argument sort order stable.
pub fn standard_sphere() -> MarkedSphere {
    MarkedSphere::new(
        vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)],
        c(1.5, -2.5),
        false,
    )
    .unwrap()
}

pub fn random_complex(rng: &mut ChaCha8Rng, half_width: f64) -> C64 {
    c(
        rng.gen_range(-half_width..half_width),
        rng.gen_range(-half_width..half_width),
    )
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, half_width: f64) -> CMat {
    CMat::from_fn(r, r, |_, _| random_complex(rng, half_width))
}

/// Random rank-2 traceless-sum system on the standard sphere with
/// `‖A_i‖_F ≤ bound`.
pub fn seeded_r2n4_system(seed: u64, bound: f64) -> FuchsianSystem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut residues: Vec<CMat> = (0..3).map(|_| random_matrix(&mut rng, 2, 0.45)).collect();
        let last = -(&residues[0] + &residues[1] + &residues[2]);
        residues.push(last);
        let max = residues.iter().map(frob).fold(0.0, f64::max);
        if max > bound {
            let scale = c(bound / max * 0.99, 0.0);
            for m in &mut residues {
                *m *= scale;
            }
        }
        let system = FuchsianSystem::new(standard_sphere(), residues).unwrap();
        // avoid accidentally resonant spectra that make flag matching flaky
        let ok = system.residues().iter().all(|a| {
            let ev = iml_core::matrix::eigenvalues(a).unwrap();
            (ev[0] - ev[1]).norm() > 1e-3
        });
        if ok {
            return system;
        }
    }
}

/// The same system with float exponents read off the residue spectra
/// (lexicographically sorted per point).
pub fn connection_from_spectra(system: FuchsianSystem) -> ParabolicConnection {
    let rows: Vec<Vec<C64>> = system
        .residues()
        .iter()
        .map(|a| {
            let mut ev = iml_core::matrix::eigenvalues(a).unwrap();
            iml_core::matrix::sort_lex(&mut ev);
            ev
        })
        .collect();
    let exponents = ExponentData::from_complex_rows(&rows).unwrap();
    ParabolicConnection::from_system(system, exponents).unwrap()
}
