use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;

use photonic_onn::mesh::{compose_mesh, encode_features, MeshParams};
use photonic_onn::metrics::{mae, r2, rmse};
use photonic_onn::molio::{
    coulomb_matrix, eigenspectrum, featurize, fit_scaler, Atom, Labels, Molecule, PropertyKind,
};
use photonic_onn::network::{Activation, Detection, OnnModel, OnnParts, Readout};

fn molecule() -> impl Strategy<Value = Molecule> {
    let atom = (prop::sample::select(vec![1u32, 6, 7, 8, 9]), prop::array::uniform3(-6.0..6.0f64));
    prop::collection::vec(atom, 2..12).prop_filter_map("atoms too close", |atoms| {
        let atoms: Vec<Atom> = atoms
            .into_iter()
            .map(|(z, p)| Atom { atomic_number: z, position: p })
            .collect();
        for i in 0..atoms.len() {
            for j in 0..i {
                let d: f64 = (0..3).map(|k| (atoms[i].position[k] - atoms[j].position[k]).powi(2)).sum();
                if d.sqrt() < 1.0 {
                    return None;
                }
            }
        }
        Molecule::new("m", atoms, Labels::new()).ok()
    })
}

/// Rotation from a unit quaternion.
fn rotation(q: [f64; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn phases(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0..TAU, n * (n - 1) + n)
}

fn unit_scaler() -> photonic_onn::molio::LabelScaler {
    let a = Labels::from([(PropertyKind::FreeEnergy, 0.0)]);
    let b = Labels::from([(PropertyKind::FreeEnergy, 1.0)]);
    fit_scaler(&[&a, &b]).unwrap()
}

fn model(n: usize, flat: &[f64], scale: f64, bias: Vec<Complex64>) -> OnnModel {
    OnnModel::new(OnnParts {
        mesh: MeshParams::from_flat(n, flat).unwrap(),
        input_scale: scale,
        bias,
        readout: Readout::zeros(1, n),
        feature_divisor: 1.0,
        scaler: unit_scaler(),
        activation: Activation::IntensityAbs,
        detection: Detection::Modulus,
        tasks: vec![PropertyKind::FreeEnergy],
    })
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spectrum_ignores_atom_order_and_rigid_motion(
        mol in molecule(),
        seed in any::<u64>(),
        q in prop::array::uniform4(-1.0..1.0f64),
        t in prop::array::uniform3(-20.0..20.0f64),
    ) {
        prop_assume!(q.iter().map(|v| v * v).sum::<f64>() > 1e-3);
        let base = featurize(&mol, 16).unwrap();
        let n = mol.atoms().len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let moved = mol.permuted(&perm).transformed(&rotation(q), t);
        let other = featurize(&moved, 16).unwrap();
        for (a, b) in base.values().iter().zip(other.values()) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn padding_only_adds_zero_eigenvalues(mol in molecule()) {
        let n = mol.atoms().len();
        let tight = eigenspectrum(&coulomb_matrix(&mol, n).unwrap(), n).unwrap();
        let padded = eigenspectrum(&coulomb_matrix(&mol, 29).unwrap(), 29).unwrap();
        let mut expected = tight.values().to_vec();
        expected.extend(std::iter::repeat_n(0.0, 29 - n));
        expected.sort_by(|a, b| b.total_cmp(a));
        for (a, b) in expected.iter().zip(padded.values()) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn scaler_round_trips(lo in -1e6..0.0f64, span in 1e-3..1e6f64, ys in prop::collection::vec(-2e6..2e6f64, 1..50)) {
        let a = Labels::from([(PropertyKind::Enthalpy, lo)]);
        let b = Labels::from([(PropertyKind::Enthalpy, lo + span)]);
        let s = fit_scaler(&[&a, &b]).unwrap();
        for y in ys {
            let back = s.unscale(PropertyKind::Enthalpy, s.scale(PropertyKind::Enthalpy, y));
            prop_assert!((back - y).abs() <= 1e-9 * y.abs().max(span));
        }
    }

    #[test]
    fn mesh_is_unitary_and_preserves_norm(flat in phases(8), x in prop::collection::vec(-3.0..3.0f64, 16)) {
        let w = compose_mesh(&MeshParams::from_flat(8, &flat).unwrap());
        prop_assert!(w.unitarity_error() < 1e-10);
        let v = encode_features(&x, 1.0).unwrap();
        let out = w.matvec(&v);
        let n_in: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let n_out: f64 = out.iter().map(|z| z.norm_sqr()).sum();
        prop_assert!((n_in - n_out).abs() <= 1e-10 * n_in.max(1.0));
    }

    #[test]
    fn output_phases_are_periodic(flat in phases(6), k in 0usize..6, turns in -3i32..4) {
        let mut shifted = flat.clone();
        shifted[30 + k] += TAU * f64::from(turns);
        let a = compose_mesh(&MeshParams::from_flat(6, &flat).unwrap());
        let b = compose_mesh(&MeshParams::from_flat(6, &shifted).unwrap());
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn detection_is_homogeneous_and_phase_blind(
        flat in phases(8),
        x in prop::collection::vec(-1.0..1.0f64, 16),
        t in 0.01..10.0f64,
        global in 0.0..TAU,
    ) {
        let zero = vec![Complex64::new(0.0, 0.0); 8];
        let h = model(8, &flat, 1.0, zero.clone()).forward_optical(&x);
        let ht = model(8, &flat, t, zero).forward_optical(&x);
        for (a, b) in h.iter().zip(&ht) {
            prop_assert!((t * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
        // a common output phase rotates every field by the same angle
        let mut rotated = flat.clone();
        for p in &mut rotated[56..] {
            *p += global;
        }
        let hr = model(8, &rotated, 1.0, vec![Complex64::new(0.0, 0.0); 8]).forward_optical(&x);
        for (a, b) in h.iter().zip(&hr) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn forward_matches_naive_product(
        n in 2usize..=3,
        flat in phases(3),
        x in prop::collection::vec(-2.0..2.0f64, 6),
        c in 0.1..3.0f64,
        b in prop::collection::vec((-0.5..0.5f64, -0.5..0.5f64), 3),
    ) {
        let flat = if n == 3 { flat } else { flat[..n * (n - 1) + n].to_vec() };
        let bias: Vec<Complex64> = b[..n].iter().map(|&(re, im)| Complex64::new(re, im)).collect();
        let m = model(n, &flat, c, bias.clone());
        let w = m.weights();
        let got = m.forward_optical(&x[..2 * n]);
        for i in 0..n {
            let mut acc = bias[i];
            for j in 0..n {
                acc += w[(i, j)] * Complex64::new(c * x[2 * j], c * x[2 * j + 1]);
            }
            prop_assert!((acc.norm() - got[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rmse_dominates_mae_and_r2_is_affine_invariant(
        pairs in prop::collection::vec((-100.0..100.0f64, -100.0..100.0f64), 3..40),
        scale in 0.1..10.0f64,
        shift in -50.0..50.0f64,
    ) {
        let (pred, truth): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(truth.iter().any(|t| (t - truth[0]).abs() > 1e-6));
        prop_assert!(rmse(&pred, &truth).unwrap() >= mae(&pred, &truth).unwrap() - 1e-12);
        let tp: Vec<f64> = pred.iter().map(|p| scale * p + shift).collect();
        let tt: Vec<f64> = truth.iter().map(|t| scale * t + shift).collect();
        let (a, b) = (r2(&pred, &truth).unwrap(), r2(&tp, &tt).unwrap());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
}
