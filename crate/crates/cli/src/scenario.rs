//! Initial data of the scenario presets.

use std::f64::consts::PI;

use mhdsim_core::geometry::{BulkVector, Side};
use mhdsim_core::spectral::InterfaceField;
use mhdsim_core::state::{init_state, potential_field, InitialData, Setup};
use mhdsim_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{RunConfig, Scenario};

const AREA: f64 = 4.0 * PI * PI;

/// The initial interface height f₀ at resolution n.
pub fn interface_height(scenario: &Scenario, n: usize, seed: u64) -> InterfaceField {
    match scenario {
        Scenario::Equilibrium | Scenario::Collinear | Scenario::Sheared { .. } => InterfaceField::zeros(n),
        Scenario::Perturbed { epsilon, k } => InterfaceField::from_fn(n, |x, y| epsilon * (k[0] * x + k[1] * y).cos()),
        Scenario::Explicit { modes, .. } => InterfaceField::from_fn(n, |x, y| {
            modes.iter().map(|m| m.amplitude * (m.k[0] * x + m.k[1] * y + m.phase).cos()).sum()
        }),
        Scenario::Random { amplitude, kmax } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kmax = *kmax as i32;
            let mut modes = Vec::new();
            for k1 in -kmax..=kmax {
                for k2 in 0..=kmax {
                    if k2 == 0 && k1 <= 0 {
                        continue;
                    }
                    let norm = f64::from(k1 * k1 + k2 * k2);
                    let a = rng.gen_range(-1.0..1.0) / (norm * norm);
                    let phase = rng.gen_range(0.0..2.0 * PI);
                    modes.push((f64::from(k1), f64::from(k2), a, phase));
                }
            }
            let raw = InterfaceField::from_fn(n, |x, y| modes.iter().map(|&(k1, k2, a, p)| a * (k1 * x + k2 * y + p).cos()).sum());
            let peak = raw.max_abs();
            if peak > 0.0 {
                raw.scale(amplitude / peak)
            } else {
                raw
            }
        }
    }
}

/// Setup and initial state of a configuration at resolution (n, m).
pub fn build_at(config: &RunConfig, n: usize, m: usize) -> Result<(Setup, InitialData)> {
    let scenario = config.scenario();
    let f0 = interface_height(scenario, n, config.seed);
    let mut setup = Setup::new(&f0, m, config.s, config.c0, config.c1, config.current())?;
    setup.enforce_stability = config.enforce_stability;
    let map = setup.reference_map(Side::Plasma);
    let (u0, h0) = match scenario {
        Scenario::Equilibrium | Scenario::Collinear => (BulkVector::zeros(n, m, Side::Plasma), BulkVector::constant(map, [1.0, 0.0, 0.0])),
        Scenario::Sheared { velocity, field } => (
            BulkVector::from_fn(map, |_, _, z| [velocity * z.cos(), 0.0, 0.0]),
            BulkVector::from_fn(map, |_, _, z| [1.0, field * (1.0 + z), 0.0]),
        ),
        Scenario::Perturbed { .. } | Scenario::Random { .. } => {
            (BulkVector::zeros(n, m, Side::Plasma), potential_field(map, [AREA, 0.0])?)
        }
        Scenario::Explicit { mean_field, .. } => {
            (BulkVector::zeros(n, m, Side::Plasma), potential_field(map, [AREA * mean_field[0], AREA * mean_field[1]])?)
        }
    };
    let init = init_state(&u0, &h0, &setup)?;
    Ok((setup, init))
}

pub fn build(config: &RunConfig) -> Result<(Setup, InitialData)> {
    build_at(config, config.n, config.m)
}
