//! Round-trip and damage-tolerance properties of the on-disk formats and
//! the config parser, driven by generated inputs.

use hstokes::cache::{read_correctors, read_solution, write_correctors, write_solution, CacheKey};
use hstokes::cell::CorrectorSet;
use hstokes::coeff::{build_coefficient, Family};
use hstokes::config::parse_config_str;
use hstokes::field::{BoxVelocity, Field2, TorusVelocity};
use hstokes::solver::SolveStats;
use proptest::prelude::*;

fn key(n: usize) -> CacheKey {
    let coeff = build_coefficient(
        Family::Laminate {
            offset: 2.0,
            amplitude: 1.0,
        },
        None,
    )
    .unwrap();
    CacheKey::for_correctors(&coeff, n, 1e-9)
}

fn field(n: usize, data: &[f64]) -> Field2 {
    Field2 {
        nx: n,
        ny: n,
        data: data.to_vec(),
    }
}

fn set_from(n: usize, payload: &[f64]) -> CorrectorSet {
    // Twelve n^2 blocks: four (u1, u2) velocity pairs and four pressures.
    let len = n * n;
    let block = |k: usize| &payload[k * len..(k + 1) * len];
    CorrectorSet {
        n,
        chi: (0..4)
            .map(|e| TorusVelocity {
                n,
                u1: field(n, block(2 * e)),
                u2: field(n, block(2 * e + 1)),
            })
            .collect(),
        pi: (8..12).map(|k| field(n, block(k))).collect(),
        stats: (0..4)
            .map(|e| SolveStats {
                iterations: e,
                restarts: 0,
                residual: 1e-10,
                converged: true,
            })
            .collect(),
    }
}

/// Finite f64 from raw bits, exercising subnormals and negative zero.
fn finite_f64() -> impl Strategy<Value = f64> {
    any::<u64>().prop_map(f64::from_bits).prop_filter(
        "finite payloads only: NaN never compares equal",
        |v| v.is_finite(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn corrector_payloads_survive_the_roundtrip_bitwise(
        payload in prop::collection::vec(finite_f64(), 12 * 16),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let k = key(4);
        let set = set_from(4, &payload);
        write_correctors(dir.path(), &k, &set).unwrap();
        let back = read_correctors(dir.path(), &k).unwrap().expect("fresh write must hit");
        for (a, b) in set.chi.iter().zip(&back.chi) {
            for (x, y) in a.u1.data.iter().zip(&b.u1.data) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
            for (x, y) in a.u2.data.iter().zip(&b.u2.data) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        for (a, b) in set.pi.iter().zip(&back.pi) {
            for (x, y) in a.data.iter().zip(&b.data) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn damaged_cache_files_never_panic_or_error(
        offset in 0usize..600,
        byte in any::<u8>(),
        cut in 0usize..600,
    ) {
        let dir = tempfile::tempdir().unwrap();
        let k = key(4);
        let set = set_from(4, &vec![0.5; 12 * 16]);
        let path = write_correctors(dir.path(), &k, &set).unwrap();

        let mut bytes = std::fs::read(&path).unwrap();
        let at = offset % bytes.len();
        bytes[at] ^= byte;
        bytes.truncate(cut.max(1).min(bytes.len()));
        std::fs::write(&path, &bytes).unwrap();

        // Hit or miss are both acceptable outcomes; an Err or a panic is
        // not, because damage must degrade to a recompute.
        prop_assert!(read_correctors(dir.path(), &k).is_ok());
    }

    #[test]
    fn arbitrary_bytes_never_panic_the_solution_reader(
        bytes in prop::collection::vec(any::<u8>(), 0..400),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("soup.hssol");
        std::fs::write(&path, &bytes).unwrap();
        // Dumps are explicit artifacts: damage may be an error, but it
        // must be a returned one.
        let _ = read_solution(&path);
    }

    #[test]
    fn arbitrary_text_never_panics_the_config_parser(
        text in "[ -~\n]{0,300}",
    ) {
        let _ = parse_config_str(&text);
    }

    #[test]
    fn config_values_roundtrip_through_the_parser(
        n_exp in 5u32..9,
        tol_exp in -9i32..-5,
        factor in 4u32..16,
    ) {
        let n = 1usize << n_exp;
        let tol = 10f64.powi(tol_exp);
        let text = format!(
            "[cell]\nn = {n}\ntol = {tol}\n[sweep]\ngrid_factor = {factor}\n"
        );
        let cfg = parse_config_str(&text).unwrap();
        prop_assert_eq!(cfg.cell_n, n);
        prop_assert!((cfg.cell_tol - tol).abs() < 1e-18);
        prop_assert_eq!(cfg.grid_factor, factor as usize);
    }
}

#[test]
fn solution_dumps_roundtrip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("one.hssol");
    let m = 8;
    let mut velocity = BoxVelocity::zeros(m);
    for (k, v) in velocity.u1.data.iter_mut().enumerate() {
        *v = (k as f64 * 0.7).sin();
    }
    let pressure = Field2::from_fn(m, m, |i, j| (i * m + j) as f64 / 10.0 - 3.0);
    write_solution(&path, 0.125, &velocity, &pressure).unwrap();
    let dump = read_solution(&path).unwrap();
    assert_eq!(dump.m, m);
    assert_eq!(dump.epsilon, 0.125);
    for (a, b) in velocity.u1.data.iter().zip(&dump.velocity.u1.data) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    for (a, b) in pressure.data.iter().zip(&dump.pressure.data) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
