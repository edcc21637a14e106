use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::f64::consts::FRAC_PI_2;

use tcsim_core::calibration::{
    analytic_spec, analyze_gate, collision_grid, sideband_collision_map, GateKind, GateSpec,
};
use tcsim_core::device::DeviceConfig;
use tcsim_core::dynamics::{propagate, DressedBasis, PropagationOptions};
use tcsim_core::effective::CouplingForm;
use tcsim_core::fluxcontrol::{CrosstalkMatrix, TransferTable};
use tcsim_core::tomography::{average_fidelity, iswap, simulate_qpt, ProcessTensor, QptSettings};

#[test]
fn analytic_iswap_point() {
    let cfg = DeviceConfig::bundled();
    let (spec, g) = analytic_spec(GateKind::ISwap, &cfg).unwrap();
    assert!(spec.resonance_residual_ghz.abs() < 1e-6);
    assert!((spec.interaction_time() * g - 0.25).abs() < 1e-12);
    assert!((g - cfg.gates.iswap.target_coupling_ghz).abs() < 1e-5, "{g}");

    let model = cfg.model().unwrap();
    let opts = PropagationOptions::default();
    let prop = propagate(&model, &spec.drive(&model), &opts).unwrap();
    assert!(prop.unitarity_error < 1e-8);
    let basis = DressedBasis::new(&model.idle().unwrap(), CouplingForm::Full);
    let a = analyze_gate(GateKind::ISwap, &prop.unitary, &basis).unwrap();
    // Uncalibrated: close to iSWAP but short of the refined point.
    assert!(a.ptm.leakage < 5e-3, "{}", a.ptm.leakage);
    assert!(a.average_fidelity > 0.98, "{}", a.average_fidelity);
    assert!((a.fsim.theta + FRAC_PI_2).abs() < 0.15, "{}", a.fsim.theta);
}

#[test]
fn gate_spec_json_round_trip() {
    let (spec, _) = analytic_spec(GateKind::Cz20, &DeviceConfig::bundled()).unwrap();
    let text = serde_json::to_string(&spec).unwrap();
    assert!(text.contains("\"kind\":\"cz20\""), "{text}");
    let back: GateSpec = serde_json::from_str(&text).unwrap();
    assert_eq!(back, spec);
}

#[test]
fn operating_frequencies_clear_collisions() {
    let cfg = DeviceConfig::bundled();
    let model = cfg.model().unwrap();
    for g in [cfg.gates.iswap, cfg.gates.cz20] {
        let p = model.at_coupler(g.coupler_bias_phi0).unwrap();
        let grid = collision_grid(&model, &p, g.mod_freq_ghz, 101).unwrap();
        let map = sideband_collision_map(&p, &model.q2, model.bias[1], &grid, cfg.simulation.guard_band_ghz).unwrap();
        assert!(
            map.margin(g.mod_freq_ghz) >= 0.0,
            "{} vs {}",
            g.mod_freq_ghz,
            map.recommended_min
        );
    }
}

#[test]
fn sampled_tomography_of_ideal_iswap() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = QptSettings {
        shots: 20_000,
        readout: [0.901, 0.920],
    };
    let ptm = simulate_qpt(&iswap(), &settings, &mut rng).unwrap();
    let f = average_fidelity(&ptm, &ProcessTensor::from_operator(&iswap()));
    assert!(f > 0.99 && f < 1.01, "{f}");
}

#[test]
fn config_and_tables_from_disk() {
    let dir = std::env::temp_dir().join(format!("tcsim-core-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = DeviceConfig::bundled();
    let path = dir.join("device.toml");
    std::fs::write(&path, cfg.to_toml_string()).unwrap();
    assert_eq!(DeviceConfig::load(&path).unwrap(), cfg);

    let ct = dir.join("crosstalk.csv");
    std::fs::write(&ct, format!("# measured\n{}", CrosstalkMatrix::reference().to_csv())).unwrap();
    assert_eq!(
        CrosstalkMatrix::from_csv_path(&ct).unwrap(),
        CrosstalkMatrix::reference()
    );

    let tf = dir.join("transfer.csv");
    std::fs::write(&tf, "mod_freq_ghz,ratio\n0.1,1.0\n0.5,0.8\n").unwrap();
    let t = TransferTable::from_csv_path(&tf).unwrap();
    assert!((t.ratio(0.3).unwrap() - 0.9).abs() < 1e-12);

    let err = DeviceConfig::load(&dir.join("missing.toml")).unwrap_err();
    assert!(err.to_string().contains("No such file"), "{err}");
    std::fs::remove_dir_all(&dir).unwrap();
}
