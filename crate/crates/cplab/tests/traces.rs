use approx::assert_relative_eq;
use proptest::prelude::*;

use cplab::error::CplabError;
use cplab::model::{
    build_lattice, check_constraints, make_gaussian_profile, ChargeProfile, Geometry, ModelParams,
};
use cplab::traces::{
    classify_word, d_envelope, mixed_even_words, series_binding, series_one_electron, trace_word,
    trace_words, word_bound, words_of_length, IndexWord, QuadratureSpec, TracePath, TraceSystem,
    WordClass,
};

fn word(text: &str) -> IndexWord {
    IndexWord::parse(text).unwrap()
}

fn strong_pair(r: f64) -> TraceSystem {
    let params = ModelParams::new(0.5, 3.0).unwrap();
    let prof = make_gaussian_profile(0.3).unwrap();
    let lat = build_lattice(2.0, 1.0).unwrap();
    TraceSystem::two_electron(&params, &lat, &prof, &Geometry::new(r).unwrap())
}

fn small_pair() -> TraceSystem {
    let params = ModelParams::new(0.5, 4.0).unwrap();
    let prof = make_gaussian_profile(0.2).unwrap();
    let lat = build_lattice(1.0, 1.0).unwrap();
    TraceSystem::two_electron(&params, &lat, &prof, &Geometry::new(0.3).unwrap())
}

#[test]
fn word_parsing() {
    let w = word("1122");
    assert_eq!(w.letters(), &[1, 1, 2, 2]);
    assert_eq!(w.to_string(), "1122");
    assert_eq!(w.weight(), 6);
    assert_eq!(w.transitions(), 1);
    assert!(w.is_mixed());
    assert!(IndexWord::parse("13").is_err());
    assert!(IndexWord::parse("").is_err());
    assert!(IndexWord::new(&[1, 0]).is_err());
}

#[test]
fn enumeration_counts() {
    for n in 1..=8 {
        assert_eq!(words_of_length(n).len(), 1 << n);
    }
    assert_eq!(mixed_even_words(2).len(), 0);
    let four: Vec<String> = mixed_even_words(4).iter().map(|w| w.to_string()).collect();
    assert_eq!(four, ["1122", "1212", "1221", "2112", "2121", "2211"]);
    let six = words_of_length(6);
    assert_eq!(
        six.iter()
            .filter(|w| classify_word(w) == WordClass::CaseTwo)
            .count(),
        26
    );
    assert_eq!(
        six.iter()
            .filter(|w| classify_word(w) == WordClass::CaseOne)
            .count(),
        4
    );
}

#[test]
fn mixed_pairs_vanish() {
    let system = strong_pair(0.6);
    for path in [TracePath::Factorized, TracePath::Dense] {
        let quad = QuadratureSpec {
            path,
            ..QuadratureSpec::default()
        };
        for w in ["12", "21", "1212", "2121"] {
            assert_eq!(
                trace_word(&word(w), &system, &quad).unwrap().value,
                0.0,
                "{w}"
            );
        }
    }
}

#[test]
fn odd_words_vanish_pointwise() {
    let system = small_pair();
    for n in 1..=7 {
        for w in words_of_length(n)
            .into_iter()
            .filter(|w| w.weight() % 2 == 1 || n % 2 == 1)
        {
            for s in [0.01, 0.5, 3.0, 40.0] {
                assert_eq!(
                    system.integrand_factorized(&w, s).unwrap(),
                    0.0,
                    "{w} at {s}"
                );
                assert_eq!(system.integrand_dense(&w, s).unwrap(), 0.0, "{w} at {s}");
            }
        }
    }
}

#[test]
fn electron_exchange_symmetry() {
    let system = strong_pair(0.6);
    let quad = QuadratureSpec::default();
    let v = trace_words(
        &[word("1122"), word("2211"), word("111122"), word("222211")],
        &system,
        &quad,
    )
    .unwrap();
    assert!(v[0].value > 0.0);
    assert_relative_eq!(v[0].value, v[1].value, max_relative = 1e-10);
    assert_relative_eq!(v[2].value, v[3].value, max_relative = 1e-10);
}

#[test]
fn zero_profile_series() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let lat = build_lattice(1.0, 1.0).unwrap();
    let zero = ChargeProfile::zero();
    let system = TraceSystem::one_electron(&params, &lat, &zero);
    let s = series_one_electron(&system, 6, &QuadratureSpec::default()).unwrap();
    assert_eq!(s.value, 1.5 * params.e_nu());
    assert_eq!(s.tail_bound, 0.0);
    assert_eq!(d_envelope(1.0, &params, &zero, &lat), 0.0);
}

#[test]
fn series_order_validation() {
    let system = strong_pair(0.6);
    let quad = QuadratureSpec::default();
    assert!(series_binding(&system, 3, &quad, false).is_err());
    assert!(series_binding(&system, 0, &quad, false).is_err());
    let params = ModelParams::new(0.5, 3.0).unwrap();
    let one = TraceSystem::one_electron(
        &params,
        &build_lattice(2.0, 1.0).unwrap(),
        &make_gaussian_profile(0.3).unwrap(),
    );
    assert!(series_binding(&one, 4, &quad, false).is_err());
    assert!(QuadratureSpec::with_rel_tol(0.0).is_err());
    assert!(QuadratureSpec::with_rel_tol(1e-8).is_ok());
}

#[test]
fn binding_series_low_orders() {
    let system = strong_pair(0.6);
    let quad = QuadratureSpec::default();
    let second = series_binding(&system, 2, &quad, false).unwrap();
    assert_eq!(second.value, 0.0);
    let fourth = series_binding(&system, 4, &quad, false).unwrap();
    let parts = trace_words(&mixed_even_words(4), &system, &quad).unwrap();
    let main = parts[0].value + parts[5].value;
    let exchange = parts[2].value + parts[3].value;
    assert_relative_eq!(fourth.value, main + exchange, max_relative = 1e-14);
    assert!(fourth.value > 0.0);
    assert!(fourth.converged);
}

#[test]
fn strong_coupling_has_no_tail_bound() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let prof = make_gaussian_profile(0.05).unwrap();
    let lat = build_lattice(2.0, 1.0).unwrap();
    let g = Geometry::new(0.6).unwrap();
    let system = TraceSystem::two_electron(&params, &lat, &prof, &g);
    assert!(system.a() >= 0.25);
    let quad = QuadratureSpec::default();
    assert!(matches!(
        series_binding(&system, 4, &quad, false),
        Err(CplabError::SeriesDivergence { .. })
    ));
    let unbounded = series_binding(&system, 4, &quad, true).unwrap();
    assert!(!unbounded.converged);
    assert!(unbounded.tail_bound.is_infinite());
    let one = TraceSystem::one_electron(&params, &lat, &prof);
    assert!(one.a() >= 1.0);
    assert!(matches!(
        series_one_electron(&one, 4, &quad),
        Err(CplabError::SeriesDivergence { .. })
    ));
}

#[test]
fn envelope_vanishes_at_zero_and_bounds_integrands() {
    let params = ModelParams::new(0.5, 3.0).unwrap();
    let prof = make_gaussian_profile(0.3).unwrap();
    let lat = build_lattice(2.0, 1.0).unwrap();
    let system = TraceSystem::one_electron(&params, &lat, &prof);
    assert_eq!(d_envelope(0.0, &params, &prof, &lat), 0.0);
    let a = system.a();
    for s in [0.05, 0.3, 1.0, 4.0, 25.0] {
        let d = system.d_envelope(s);
        assert_relative_eq!(d, d_envelope(s, &params, &prof, &lat), max_relative = 1e-15);
        for n in 1..=4usize {
            let v = system
                .integrand_factorized(&IndexWord::new(&vec![1; 2 * n]).unwrap(), s)
                .unwrap();
            assert!(v >= 0.0);
            assert!(v <= a.powi(n as i32 - 1) * d * (1.0 + 1e-12), "n={n} s={s}");
        }
    }
}

#[test]
fn word_bound_examples() {
    let params = ModelParams::new(0.5, 2.0).unwrap();
    let prof = make_gaussian_profile(1.0).unwrap();
    let report = check_constraints(&params, &prof, &build_lattice(2.0, 1.0).unwrap());
    assert_relative_eq!(
        word_bound(&word("11222211"), &report).unwrap(),
        report.c_l.powi(4),
        max_relative = 1e-15
    );
    let rho = report.continuum_norms[1];
    let case_one = rho * rho / (3.0 * report.nu * report.nu);
    assert_relative_eq!(
        word_bound(&word("111122"), &report).unwrap(),
        case_one,
        max_relative = 1e-15
    );
    assert_eq!(word_bound(&word("1122"), &report).unwrap(), 1.0);
    assert_eq!(word_bound(&word("111112"), &report).unwrap(), 0.0);
    assert!(matches!(
        word_bound(&word("11"), &report),
        Err(CplabError::Classification { .. })
    ));
    assert!(matches!(
        word_bound(&word("111111"), &report),
        Err(CplabError::Classification { .. })
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn factorized_matches_dense(bits in 0u32..256, len in 1usize..=8, log_s in -2.0f64..2.0) {
        let system = small_pair();
        let letters: Vec<u8> = (0..len).map(|i| if bits >> i & 1 == 1 { 2 } else { 1 }).collect();
        let w = IndexWord::new(&letters).unwrap();
        let s = 10f64.powf(log_s);
        let f = system.integrand_factorized(&w, s).unwrap();
        let d = system.integrand_dense(&w, s).unwrap();
        prop_assert!((f - d).abs() <= 1e-10 * d.abs().max(f64::MIN_POSITIVE) || f == d, "{} at {}: {} vs {}", w, s, f, d);
    }
}
