//! Built-in experiment presets for the case studies.

use crate::config::{Check, DensityKind, ExperimentConfig, Pipeline};
use dynlap::dynamics::MapKind;

pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub build: fn() -> ExperimentConfig,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "cylinder_T1",
        description: "area-preserving shear on the weighted cylinder, 256x64, Q=400",
        build: cylinder_t1,
    },
    Preset {
        name: "cylinder_T2",
        description: "shear with vertical distortion on the uniform cylinder, 256x64, Q=400",
        build: cylinder_t2,
    },
    Preset {
        name: "torus_T4T3",
        description:
            "distortion followed by the standard map on the weighted torus, 128x128, Q=400",
        build: torus_t4t3,
    },
    Preset {
        name: "static_fixture_2_1",
        description: "analytic line masses of the static optimal cut under the shear",
        build: static_fixture,
    },
    Preset {
        name: "mollify_demo",
        description: "mollified-operator expansion defects on a fully periodic cylinder",
        build: mollify_demo,
    },
    Preset {
        name: "identity_uniform_16",
        description: "identity dynamics on a uniform 16x16 square (oracle-friendly)",
        build: identity_uniform_16,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

fn cylinder_base() -> ExperimentConfig {
    ExperimentConfig {
        x1_range: (0.0, 4.0),
        x2_range: (0.0, 1.0),
        k: 256,
        l: 64,
        periodic_x1: true,
        periodic_x2: false,
        q: 400,
        ..ExperimentConfig::default()
    }
}

fn cylinder_t1() -> ExperimentConfig {
    ExperimentConfig {
        density: DensityKind::SinusoidX1,
        map: vec![MapKind::ShearT1],
        checks: vec![Check::Cheeger, Check::FedererFleming],
        reference_lambda2: Some(-0.6046),
        ..cylinder_base()
    }
}

fn cylinder_t2() -> ExperimentConfig {
    ExperimentConfig {
        density: DensityKind::Uniform,
        map: vec![MapKind::ShearT2],
        checks: vec![Check::Cheeger],
        eigen_k: 9,
        ..cylinder_base()
    }
}

fn torus_t4t3() -> ExperimentConfig {
    let two_pi = 2.0 * std::f64::consts::PI;
    ExperimentConfig {
        x1_range: (0.0, two_pi),
        x2_range: (0.0, two_pi),
        k: 128,
        l: 128,
        periodic_x1: true,
        periodic_x2: true,
        density: DensityKind::SinusoidX2Torus,
        map: vec![MapKind::DistortT3, MapKind::StandardT4],
        q: 400,
        eigen_k: 14,
        checks: vec![Check::Cheeger],
        ..ExperimentConfig::default()
    }
}

fn static_fixture() -> ExperimentConfig {
    ExperimentConfig {
        pipeline: Pipeline::Fixture21,
        density: DensityKind::SinusoidX1,
        map: vec![MapKind::ShearT1],
        checks: vec![],
        ..cylinder_base()
    }
}

fn mollify_demo() -> ExperimentConfig {
    ExperimentConfig {
        pipeline: Pipeline::Mollify,
        x1_range: (0.0, 4.0),
        x2_range: (0.0, 1.0),
        k: 128,
        l: 32,
        periodic_x1: true,
        periodic_x2: true,
        density: DensityKind::Uniform,
        map: vec![MapKind::ShearT1],
        q: 100,
        checks: vec![],
        mollify_epsilons: vec![0.2, 0.1],
        ..ExperimentConfig::default()
    }
}

fn identity_uniform_16() -> ExperimentConfig {
    ExperimentConfig {
        x1_range: (0.0, 1.0),
        x2_range: (0.0, 1.0),
        k: 16,
        l: 16,
        periodic_x1: false,
        periodic_x2: false,
        density: DensityKind::Uniform,
        map: vec![MapKind::Identity],
        q: 16,
        eigen_k: 4,
        sweep_thresholds: 60,
        checks: vec![Check::Cheeger],
        ..ExperimentConfig::default()
    }
}
