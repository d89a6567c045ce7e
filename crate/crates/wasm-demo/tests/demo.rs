use landau_wasm_demo::{angular_pair, kernel_at, parse_variant, recurrence_json};

#[test]
fn coulomb_kernel_at_unit_distance() {
    let out = kernel_at(-3.0, 0.5, 4.0, [1.0, 0.0, 0.0], "full").unwrap();
    assert_eq!(out.len(), 15);
    // a(e₁) = Π(e₁) = diag(0, 1, 1), ∇·a(e₁) = −2 e₁.
    let expected = [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
    for (x, y) in out[..9].iter().zip(expected) {
        assert!((x - y).abs() < 1e-15);
    }
    let mut eig = out[9..12].to_vec();
    eig.sort_by(f64::total_cmp);
    assert!(eig[0].abs() < 1e-14 && (eig[1] - 1.0).abs() < 1e-14 && (eig[2] - 1.0).abs() < 1e-14);
    assert!((out[12] + 2.0).abs() < 1e-15 && out[13] == 0.0 && out[14] == 0.0);
}

#[test]
fn kernel_rejects_bad_input() {
    assert!(kernel_at(-1.0, 0.5, 4.0, [1.0, 0.0, 0.0], "full").is_err());
    assert!(kernel_at(-3.0, 0.5, 4.0, [0.0; 3], "full").is_err());
    assert!(parse_variant("sideways").is_err());
    for name in ["full", "mollified", "in", "out", "in_mollified", "out_mollified"] {
        assert!(parse_variant(name).is_ok());
    }
}

#[test]
fn recurrence_below_threshold_has_no_violations() {
    let v: serde_json::Value = serde_json::from_str(&recurrence_json(1.0, 2.0, 2.0, 30).unwrap()).unwrap();
    assert_eq!(v["vanishes"], true);
    assert!(v["violations"].as_array().unwrap().is_empty());
    assert_eq!(v["log_v"].as_array().unwrap().len(), 31);
    let above: serde_json::Value = serde_json::from_str(&recurrence_json(10.0, 2.0, 2.0, 5).unwrap()).unwrap();
    assert_eq!(above["vanishes"], false);
    assert!(recurrence_json(1.0, 0.5, 2.0, 5).is_err());
}

#[test]
fn angular_exact_below_bound() {
    let [exact, bound] = angular_pair(0.1, 1.0, 0.5).unwrap()[..] else { panic!() };
    assert!(exact > 0.0 && exact <= bound);
    assert!(angular_pair(0.1, 0.0, 0.5).is_err());
}
