//! Adaptive Gauss–Kronrod quadrature shared by all modules.
//!
//! The core routine integrates a vector-valued integrand with one global
//! bisection queue, so several related integrals (all trace words of a
//! series, all radial brackets of a representation) share every function
//! evaluation. The 21-point Kronrod rule is paired with its embedded 10-point
//! Gauss rule and the error is rescaled the way QUADPACK does it.

/// Kronrod abscissae on [-1, 1] (positive half, descending, centre last).
#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

/// Kronrod weights matching `XGK`.
#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_600_525_478_324,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

/// Gauss weights for the odd-indexed entries of `XGK`.
#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Tolerances and budget for one adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadSpec {
    /// Requested relative accuracy per component.
    pub rel_tol: f64,
    /// Absolute accuracy that is always considered good enough.
    pub abs_tol: f64,
    /// Maximum number of subintervals kept in the queue.
    pub max_intervals: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            max_intervals: 4000,
        }
    }
}

impl QuadSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadSpec {
            rel_tol,
            ..QuadSpec::default()
        }
    }
}

/// Result of a vector integration.
#[derive(Clone, Debug, PartialEq)]
pub struct VecQuad {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    /// Integral of the absolute value of each component; the natural scale
    /// for judging cancellation.
    pub abs_integrals: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
}

/// Result of a scalar integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub value: f64,
    pub error: f64,
    pub abs_integral: f64,
    pub evaluations: usize,
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    val: Vec<f64>,
    err: Vec<f64>,
    abs: Vec<f64>,
}

fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut e = err.abs();
    if resasc != 0.0 && e != 0.0 {
        e = resasc * (200.0 * e / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        e = e.max(50.0 * f64::EPSILON * resabs);
    }
    e
}

fn gk21<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    dim: usize,
    a: f64,
    b: f64,
    fv: &mut [Vec<f64>],
) -> Segment {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    // fv[0] holds the centre, fv[2j+1] and fv[2j+2] the pair at -x_j and +x_j.
    f(c, &mut fv[0]);
    for j in 0..10 {
        let x = h * XGK[j];
        f(c - x, &mut fv[2 * j + 1]);
        f(c + x, &mut fv[2 * j + 2]);
    }
    let mut val = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut abs = vec![0.0; dim];
    for i in 0..dim {
        let fc = fv[0][i];
        let mut resk = WGK[10] * fc;
        let mut resg = 0.0;
        let mut resabs = WGK[10] * fc.abs();
        for j in 0..10 {
            let (f1, f2) = (fv[2 * j + 1][i], fv[2 * j + 2][i]);
            resk += WGK[j] * (f1 + f2);
            resabs += WGK[j] * (f1.abs() + f2.abs());
            if j % 2 == 1 {
                resg += WG[j / 2] * (f1 + f2);
            }
        }
        let mean = 0.5 * resk;
        let mut resasc = WGK[10] * (fc - mean).abs();
        for j in 0..10 {
            resasc += WGK[j] * ((fv[2 * j + 1][i] - mean).abs() + (fv[2 * j + 2][i] - mean).abs());
        }
        let ah = h.abs();
        val[i] = resk * h;
        abs[i] = resabs * ah;
        err[i] = rescale_error((resk - resg) * h, resabs * ah, resasc * ah);
    }
    Segment {
        a,
        b,
        val,
        err,
        abs,
    }
}

/// Integrates the vector integrand `f` over the union of the intervals
/// delimited by `breakpoints` (which must be increasing).
///
/// A component is converged when its error is below the largest of the
/// relative target, the absolute target, and a roundoff floor of
/// `100 eps` times the integral of its absolute value. The floor keeps
/// strongly cancelling oscillatory integrals from exhausting the budget.
pub fn integrate_vec<F>(mut f: F, dim: usize, breakpoints: &[f64], spec: &QuadSpec) -> VecQuad
where
    F: FnMut(f64, &mut [f64]),
{
    assert!(breakpoints.len() >= 2, "need at least one interval");
    let mut fv = vec![vec![0.0; dim]; 21];
    let mut segs: Vec<Segment> = breakpoints
        .windows(2)
        .map(|w| gk21(&mut f, dim, w[0], w[1], &mut fv))
        .collect();
    let mut evaluations = 21 * segs.len();
    let mut tol = vec![0.0; dim];
    loop {
        let mut values = vec![0.0; dim];
        let mut errors = vec![0.0; dim];
        let mut abs = vec![0.0; dim];
        for s in &segs {
            for i in 0..dim {
                values[i] += s.val[i];
                errors[i] += s.err[i];
                abs[i] += s.abs[i];
            }
        }
        let mut done = true;
        for i in 0..dim {
            tol[i] = (spec.rel_tol * values[i].abs())
                .max(spec.abs_tol)
                .max(100.0 * f64::EPSILON * abs[i]);
            if !(errors[i] <= tol[i]) {
                done = false;
            }
        }
        let finish = |converged: bool| VecQuad {
            values: values.clone(),
            errors: errors.clone(),
            abs_integrals: abs.clone(),
            evaluations,
            converged,
        };
        if done {
            return finish(true);
        }
        if segs.len() >= spec.max_intervals {
            return finish(false);
        }
        let mut best = None;
        let mut best_score = -1.0;
        for (idx, s) in segs.iter().enumerate() {
            let mid = 0.5 * (s.a + s.b);
            if mid <= s.a || mid >= s.b {
                continue;
            }
            let mut score = 0.0;
            for i in 0..dim {
                if tol[i] > 0.0 {
                    score += s.err[i] / tol[i];
                } else if s.err[i] > 0.0 {
                    score = f64::INFINITY;
                }
            }
            if score > best_score {
                best_score = score;
                best = Some(idx);
            }
        }
        let Some(idx) = best else {
            return finish(false);
        };
        let s = segs.swap_remove(idx);
        let mid = 0.5 * (s.a + s.b);
        segs.push(gk21(&mut f, dim, s.a, mid, &mut fv));
        segs.push(gk21(&mut f, dim, mid, s.b, &mut fv));
        evaluations += 42;
    }
}

/// Scalar version of [`integrate_vec`] on a single interval.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, spec: &QuadSpec) -> Quad {
    let r = integrate_vec(|x, out: &mut [f64]| out[0] = f(x), 1, &[a, b], spec);
    Quad {
        value: r.values[0],
        error: r.errors[0],
        abs_integral: r.abs_integrals[0],
        evaluations: r.evaluations,
        converged: r.converged,
    }
}

/// Integrates over `[0, inf)` through the map `x = scale * u / (1 - u)`.
pub fn integrate_half_line_vec<F>(mut f: F, dim: usize, scale: f64, spec: &QuadSpec) -> VecQuad
where
    F: FnMut(f64, &mut [f64]),
{
    let mut tmp = vec![0.0; dim];
    integrate_vec(
        |u, out: &mut [f64]| {
            let w = 1.0 - u;
            let x = scale * u / w;
            let jac = scale / (w * w);
            f(x, &mut tmp);
            for (o, t) in out.iter_mut().zip(&tmp) {
                *o = t * jac;
            }
        },
        dim,
        &[0.0, 0.25, 0.5, 0.75, 1.0],
        spec,
    )
}

/// Scalar version of [`integrate_half_line_vec`].
pub fn integrate_half_line<F: FnMut(f64) -> f64>(mut f: F, scale: f64, spec: &QuadSpec) -> Quad {
    let r = integrate_half_line_vec(|x, out: &mut [f64]| out[0] = f(x), 1, scale, spec);
    Quad {
        value: r.values[0],
        error: r.errors[0],
        abs_integral: r.abs_integrals[0],
        evaluations: r.evaluations,
        converged: r.converged,
    }
}

/// Wynn's epsilon algorithm applied to a sequence of partial sums.
///
/// Returns the last entry of the highest even column together with the gap
/// to the previous even-column estimate, which serves as an error proxy.
pub fn wynn_epsilon(partial_sums: &[f64]) -> (f64, f64) {
    let n = partial_sums.len();
    if n < 3 {
        let last = *partial_sums.last().unwrap_or(&0.0);
        return (last, f64::INFINITY);
    }
    let mut prev = vec![0.0; n + 1];
    let mut cur = partial_sums.to_vec();
    let mut best = partial_sums[n - 1];
    let mut before = partial_sums[n - 2];
    for k in 1..n {
        let len = n - k;
        let mut next = vec![0.0; len];
        for i in 0..len {
            let d = cur[i + 1] - cur[i];
            if d == 0.0 || !d.is_finite() {
                return (best, (best - before).abs());
            }
            next[i] = prev[i + 1] + 1.0 / d;
        }
        if k % 2 == 0 {
            before = if len >= 2 { next[len - 2] } else { best };
            best = next[len - 1];
        }
        prev = cur;
        cur = next;
    }
    (best, (best - before).abs())
}

/// Result of a panel-by-panel integration over a half line.
#[derive(Clone, Debug, PartialEq)]
pub struct PanelQuad {
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub panels: usize,
    /// True when the panel budget ran out and the sums were extrapolated.
    pub accelerated: bool,
    pub evaluations: usize,
}

/// Integrates an oscillatory integrand over `[start, inf)` panel by panel,
/// each panel of length `width` (a half period is the natural choice).
///
/// Summation stops once three consecutive panels are negligible against the
/// running absolute scale. If the budget of `max_panels` is exhausted first,
/// the partial sums are extrapolated with Wynn's epsilon algorithm.
pub fn integrate_panels_vec<F>(
    mut f: F,
    dim: usize,
    start: f64,
    width: f64,
    max_panels: usize,
    spec: &QuadSpec,
    tail_tol: f64,
) -> PanelQuad
where
    F: FnMut(f64, &mut [f64]),
{
    let mut sums = vec![0.0; dim];
    let mut errs = vec![0.0; dim];
    let mut scale = vec![0.0; dim];
    let mut history: Vec<Vec<f64>> = vec![Vec::new(); dim];
    let mut quiet = 0;
    let mut evaluations = 0;
    for j in 0..max_panels {
        let a = start + j as f64 * width;
        let r = integrate_vec(&mut f, dim, &[a, a + width], spec);
        evaluations += r.evaluations;
        let mut negligible = true;
        for i in 0..dim {
            sums[i] += r.values[i];
            errs[i] += r.errors[i];
            scale[i] += r.abs_integrals[i];
            history[i].push(sums[i]);
            if r.values[i].abs() > tail_tol * scale[i] {
                negligible = false;
            }
        }
        quiet = if negligible { quiet + 1 } else { 0 };
        if quiet >= 3 {
            return PanelQuad {
                values: sums,
                errors: errs,
                panels: j + 1,
                accelerated: false,
                evaluations,
            };
        }
    }
    let mut values = vec![0.0; dim];
    for i in 0..dim {
        let tail = history[i].len().min(25);
        let seq = &history[i][history[i].len() - tail..];
        let (v, e) = wynn_epsilon(seq);
        values[i] = v;
        errs[i] += e;
    }
    PanelQuad {
        values,
        errors: errs,
        panels: max_panels,
        accelerated: true,
        evaluations,
    }
}

/// Neumaier-compensated sum of the values in the given order.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronrod_rule_is_exact_for_high_degree_polynomials() {
        let spec = QuadSpec {
            rel_tol: 1e-15,
            abs_tol: 0.0,
            max_intervals: 1,
        };
        for deg in [0, 5, 19, 30] {
            let r = integrate(|x| x.powi(deg), 0.0, 1.0, &spec);
            let exact = 1.0 / (deg as f64 + 1.0);
            assert!((r.value - exact).abs() < 1e-14, "degree {deg}: {}", r.value);
        }
    }

    #[test]
    fn adaptive_refinement_handles_endpoint_singularity() {
        let r = integrate(|x| x.sqrt().ln(), 0.0, 1.0, &QuadSpec::default());
        assert!(r.converged);
        assert!((r.value + 0.5).abs() < 1e-10);
    }

    #[test]
    fn half_line_gaussian() {
        let r = integrate_half_line(|x| (-x * x).exp(), 1.0, &QuadSpec::default());
        let exact = 0.5 * std::f64::consts::PI.sqrt();
        assert!((r.value / exact - 1.0).abs() < 1e-12);
    }

    #[test]
    fn vector_components_share_nodes() {
        let r = integrate_vec(
            |x, out: &mut [f64]| {
                out[0] = x.sin();
                out[1] = x.cos();
                out[2] = 0.0;
            },
            3,
            &[0.0, std::f64::consts::PI],
            &QuadSpec::default(),
        );
        assert!(r.converged);
        assert!((r.values[0] - 2.0).abs() < 1e-13);
        assert!(r.values[1].abs() < 1e-13);
        assert_eq!(r.values[2], 0.0);
    }

    #[test]
    fn wynn_accelerates_alternating_series() {
        // Partial sums of 1 - 1/2 + 1/3 - ... converge to ln 2 very slowly.
        let mut s = 0.0;
        let sums: Vec<f64> = (1..=15)
            .map(|n| {
                s += if n % 2 == 1 { 1.0 } else { -1.0 } / n as f64;
                s
            })
            .collect();
        let (v, _) = wynn_epsilon(&sums);
        assert!((v - 2f64.ln()).abs() < 1e-10, "{v}");
    }

    #[test]
    fn panel_summation_with_acceleration_recovers_dirichlet_integral() {
        let pi = std::f64::consts::PI;
        let r = integrate_panels_vec(
            |x, out: &mut [f64]| out[0] = if x == 0.0 { 1.0 } else { x.sin() / x },
            1,
            0.0,
            pi,
            30,
            &QuadSpec::default(),
            1e-14,
        );
        assert!(r.accelerated);
        assert!((r.values[0] - pi / 2.0).abs() < 1e-9, "{}", r.values[0]);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let v = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(compensated_sum(v), 2.0);
    }
}
