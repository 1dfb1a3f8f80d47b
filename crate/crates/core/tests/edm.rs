use entinav::agent::{GpField, GroupParams};
use entinav::edm::{
    fit_mapping, fit_matrix, study_statistics, EntitativityMapping, EntitativityVector, LabeledPoint, Level, ParamBounds,
    StudyResponse, PUBLISHED_MATRIX,
};
use entinav::io::{read_matrix, write_matrix};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

const G: [[f64; 4]; 4] = [
    [-1.7862, -1.0614, -2.1983, -1.7122],
    [1.1224, 1.1441, 1.7672, -0.2634],
    [-1.0500, -1.2176, -2.1466, -0.9220],
    [1.1948, 1.7000, 0.9224, 0.3622],
];

fn oracle_normalize(gp: [f64; 4]) -> [f64; 4] {
    [
        (gp[0] - 5.0) / 14.0,
        (gp[1] - 0.7) / 3.4,
        (gp[2] - 1.5) / 2.0,
        (gp[3] - 0.5) / 1.8,
    ]
}

fn matvec(m: &[[f64; 4]; 4], v: [f64; 4]) -> [f64; 4] {
    std::array::from_fn(|r| (0..4).map(|c| m[r][c] * v[c]).sum())
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Cofactor expansion along the first row.
fn det4(m: &[[f64; 4]; 4]) -> f64 {
    (0..4)
        .map(|c| {
            let minor: [[f64; 3]; 3] = std::array::from_fn(|r| {
                let cols: Vec<usize> = (0..4).filter(|k| *k != c).collect();
                std::array::from_fn(|k| m[r + 1][cols[k]])
            });
            let sign = if c % 2 == 0 { 1.0 } else { -1.0 };
            sign * m[0][c] * det3(minor)
        })
        .sum()
}

fn gp_strategy() -> impl Strategy<Value = GroupParams> {
    (3.0..=10.0f64, 0.3..=2.0f64, 1.2..=2.2f64, 0.1..=1.0f64)
        .prop_map(|(a, b, c, d)| GroupParams::from_array([a, b, c, d]))
}

fn corner(field: GpField, level: Level) -> [f64; 4] {
    let mut gp = GroupParams::DEFAULT.to_array();
    gp[field.index()] = match level {
        Level::Min => GroupParams::MIN.to_array()[field.index()],
        Level::Max => GroupParams::MAX.to_array()[field.index()],
    };
    gp
}

fn design_points(m: &[[f64; 4]; 4]) -> Vec<LabeledPoint> {
    GpField::ALL
        .iter()
        .flat_map(|f| [Level::Min, Level::Max].map(|l| (*f, l)))
        .map(|(f, l)| {
            let e = matvec(m, oracle_normalize(corner(f, l)));
            LabeledPoint::new(f, l, EntitativityVector::from_array(e))
        })
        .collect()
}

/// Least squares for the one-at-a-time design: column `c` only sees the two
/// points that vary parameter `c`, so each column has a closed form.
fn closed_form_fit(points: &[LabeledPoint]) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for f in GpField::ALL {
        let c = f.index();
        let (mut num, mut den) = ([0.0; 4], 0.0);
        for p in points.iter().filter(|p| p.varied_param == f) {
            let x = oracle_normalize(corner(f, p.level))[c];
            for (r, e) in p.e.to_array().iter().enumerate() {
                num[r] += x * e;
            }
            den += x * x;
        }
        for r in 0..4 {
            m[r][c] = num[r] / den;
        }
    }
    m
}

#[test]
fn published_matrix_is_the_literal() {
    assert_eq!(PUBLISHED_MATRIX, G);
    assert_eq!(EntitativityMapping::published().rows(), G);
}

#[test]
fn extremes_match_oracle() {
    let map = EntitativityMapping::published();
    let e_max = matvec(&G, oracle_normalize(GroupParams::MAX.to_array()));
    let e_min = matvec(&G, oracle_normalize(GroupParams::MIN.to_array()));
    for (got, want) in map.e_max().to_array().iter().zip(e_max) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in map.e_min().to_array().iter().zip(e_min) {
        assert!((got - want).abs() < 1e-12);
    }
    for (got, want) in e_max.iter().zip([-2.2888, 1.3837, -1.8480, 1.5002]) {
        assert!((got - want).abs() < 1e-4, "{e_max:?}");
    }
    for (got, want) in e_min.iter().zip([1.0903, -0.5015, 0.8201, -0.5895]) {
        assert!((got - want).abs() < 1e-4, "{e_min:?}");
    }
}

#[test]
fn sign_pattern() {
    for c in 0..4 {
        assert!(G[0][c] < 0.0 && G[2][c] < 0.0);
    }
    assert!(G[1][3] < 0.0);
    let map = EntitativityMapping::published();
    assert!(map.threat_coefficients().iter().all(|c| *c > 0.0));
    assert!(map.corners_are_extreme());
}

#[test]
fn determinant_matches_cofactor_expansion() {
    let map = EntitativityMapping::published();
    let want = det4(&G);
    assert!(want.abs() > 1e-9);
    assert!((map.determinant() - want).abs() <= 1e-9 * want.abs().max(1.0));
}

#[test]
fn fit_matches_closed_form_and_published_matrix() {
    let points = design_points(&G);
    let fitted = fit_matrix(&points, &ParamBounds::STANDARD).unwrap();
    let oracle = closed_form_fit(&points);
    for r in 0..4 {
        for c in 0..4 {
            assert!((fitted[r][c] - oracle[r][c]).abs() < 1e-9);
            assert!((fitted[r][c] - G[r][c]).abs() < 1e-6);
        }
    }
}

fn noisy_fit(seed: u64) -> [[f64; 4]; 4] {
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<LabeledPoint> = design_points(&G)
        .into_iter()
        .map(|p| {
            let e = p.e.to_array().map(|x| x + noise.sample(&mut rng));
            LabeledPoint::new(p.varied_param, p.level, EntitativityVector::from_array(e))
        })
        .collect();
    fit_mapping(&points, &ParamBounds::STANDARD).unwrap().rows()
}

#[test]
fn noisy_fit_stays_close() {
    let fitted = noisy_fit(0);
    for r in 0..4 {
        for c in 0..4 {
            assert!((fitted[r][c] - G[r][c]).abs() <= 0.05, "({r},{c}): {}", fitted[r][c]);
        }
    }
}

/// Column `c` sees noise through two design values only, so its entries
/// scatter with σ / ‖(n_min_c, n_max_c)‖.
#[test]
fn noisy_fit_error_matches_analytic_spread() {
    let runs = 2000;
    let fits: Vec<[[f64; 4]; 4]> = (0..runs).map(|s| noisy_fit(1000 + s)).collect();
    for f in GpField::ALL {
        let c = f.index();
        let lo = oracle_normalize(corner(f, Level::Min))[c];
        let hi = oracle_normalize(corner(f, Level::Max))[c];
        let sd = 0.01 / (lo * lo + hi * hi).sqrt();
        for r in 0..4 {
            let errs: Vec<f64> = fits.iter().map(|m| m[r][c] - G[r][c]).collect();
            let mean = errs.iter().sum::<f64>() / runs as f64;
            let rms = (errs.iter().map(|e| e * e).sum::<f64>() / runs as f64).sqrt();
            assert!(mean.abs() < 4.0 * sd / (runs as f64).sqrt(), "({r},{c}) bias {mean}");
            assert!((rms / sd - 1.0).abs() < 0.1, "({r},{c}) rms {rms} vs {sd}");
        }
    }
}

#[test]
fn item_correlation_fixture_parses() {
    let text = include_str!("data/item_correlations.txt");
    let m = read_matrix(text.as_bytes()).unwrap();
    let expected = [
        [1.0, -0.829, 0.942, -0.802],
        [-0.829, 1.0, -0.906, 0.858],
        [0.942, -0.906, 1.0, -0.833],
        [-0.802, 0.858, -0.833, 1.0],
    ];
    assert_eq!(m, expected);
    for i in 0..4 {
        assert_eq!(m[i][i], 1.0);
        for j in 0..4 {
            assert_eq!(m[i][j].to_bits(), m[j][i].to_bits());
        }
    }
    let mut buf = Vec::new();
    write_matrix(&m, &mut buf).unwrap();
    assert_eq!(read_matrix(buf.as_slice()).unwrap(), m);
}

/// Cyclic Jacobi eigenvalues of a symmetric 4×4 matrix.
fn jacobi_eigenvalues(mut a: [[f64; 4]; 4]) -> [f64; 4] {
    for _ in 0..100 {
        let off: f64 = (0..4).flat_map(|i| (0..4).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[i][j] * a[i][j]).sum();
        if off < 1e-24 {
            break;
        }
        for p in 0..4 {
            for q in (p + 1)..4 {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..4 {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..4 {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev = [a[0][0], a[1][1], a[2][2], a[3][3]];
    ev.sort_by(|x, y| y.total_cmp(x));
    ev
}

/// Two latent attitudes drive all four items; a few ratings are nudged by
/// one step so the data is only approximately rank 2.
fn two_factor_responses() -> Vec<StudyResponse> {
    use rand::Rng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    for participant in 1..=30u32 {
        for pair in 1..=8u8 {
            let a: i32 = rng.random_range(-2..=2);
            let b: i32 = rng.random_range(-2..=2);
            let mut r = [a, -a, b, -b];
            if rng.random_bool(0.05) {
                let k = rng.random_range(0..4);
                r[k] = if r[k] >= 2 { 1 } else { r[k] + 1 };
            }
            out.push(StudyResponse::new(participant, pair, r).unwrap());
        }
    }
    out
}

#[test]
fn two_factor_responses_need_two_components() {
    let report = study_statistics(&two_factor_responses()).unwrap();
    let oracle = jacobi_eigenvalues(report.correlation);
    let trace: f64 = oracle.iter().sum();
    for (got, ev) in report.explained_variance.iter().zip(oracle) {
        assert!((got - ev / trace).abs() < 1e-9);
    }
    let top2 = report.explained_variance[0] + report.explained_variance[1];
    assert!(top2 >= 0.96, "{:?}", report.explained_variance);
    assert!(report.explained_variance[1] > 0.2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn inverse_roundtrip(gp in gp_strategy()) {
        let map = EntitativityMapping::published();
        let back = map.params_for_entitativity(&map.entitativity(&gp).unwrap()).unwrap();
        for (a, b) in back.to_array().iter().zip(gp.to_array()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn forward_map_matches_oracle_and_is_linear(a in gp_strategy(), b in gp_strategy()) {
        let map = EntitativityMapping::published();
        let ea = map.entitativity(&a).unwrap().to_array();
        let eb = map.entitativity(&b).unwrap().to_array();
        let mid = GroupParams::from_array(std::array::from_fn(|i| (a.to_array()[i] + b.to_array()[i]) / 2.0));
        let em = map.entitativity(&mid).unwrap().to_array();
        let oracle = matvec(&G, oracle_normalize(a.to_array()));
        for k in 0..4 {
            prop_assert!((ea[k] - oracle[k]).abs() < 1e-12);
            prop_assert!((em[k] - (ea[k] + eb[k]) / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn target_invisibility_is_exact_and_realizable(s in 0.0..=1.0f64) {
        let map = EntitativityMapping::published();
        let e = map.target_entitativity(s).unwrap();
        prop_assert!((map.invisibility(&e) - s).abs() <= 1e-9);
        let gp = map.params_unclamped(&e).unwrap();
        for f in GpField::ALL {
            prop_assert!(gp.get(f) >= f.min() - 1e-9 && gp.get(f) <= f.max() + 1e-9);
        }
    }

    #[test]
    fn constrained_target_meets_floor(gp in gp_strategy(), s_min in 0.0..=1.0f64) {
        let map = EntitativityMapping::published();
        let e = map.entitativity(&gp).unwrap();
        let c = map.constrain_invisibility(&e, s_min).unwrap();
        prop_assert!(map.invisibility(&c) >= s_min - 1e-9);
        if map.invisibility(&e) >= s_min {
            prop_assert_eq!(c, e);
        } else {
            // On the segment from e toward e_min.
            let t = (c.distance(&e)) / map.e_min().distance(&e);
            prop_assert!((0.0..=1.0).contains(&t));
            prop_assert!(e.lerp(&map.e_min(), t).distance(&c) < 1e-9);
        }
    }

    #[test]
    fn fit_is_exact_for_any_full_rank_matrix(entries in prop::array::uniform16(-3.0..3.0f64)) {
        let m: [[f64; 4]; 4] = std::array::from_fn(|r| std::array::from_fn(|c| entries[r * 4 + c]));
        prop_assume!(det4(&m).abs() > 1e-3);
        let fitted = fit_mapping(&design_points(&m), &ParamBounds::STANDARD).unwrap().rows();
        for r in 0..4 {
            for c in 0..4 {
                prop_assert!((fitted[r][c] - m[r][c]).abs() < 1e-9);
            }
        }
    }
}
