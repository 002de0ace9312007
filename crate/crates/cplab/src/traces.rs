//! Resolvent trace terms `<Q_I>` and the perturbative series for the
//! one-electron energy and the two-electron binding energy.
//!
//! A trace term is
//! `<Q_I> = (1/pi) int_0^inf s^2 tr[G(s) Q_i1(s) ... Q_in(s)] ds` with
//! `G(s) = (s^2 + Omega0)^-1` and `Q_i(s) = G^1/2 Q_i G^1/2`.
//!
//! Two evaluations of the integrand exist. The dense one multiplies the full
//! `(3 n_e + 4N)`-dimensional matrices and is the reference. The factorized
//! one uses that every `Q_i` only connects particle `i` with the field, so a
//! nonzero product alternates between the two sectors and collapses onto
//! 3x3 chain matrices
//! `C_w(x, y) = sum_{k, lambda} eps eps^T F_x F_y (s^2 + |k|^2)^-w`.
//! Starting in a particle block gives
//! `g tr[C_1(i1,i2) C_1(i3,i4) ...]` (needs `i1 = in`, `i2 = i3`, ...), and
//! starting in the field gives `tr[C_1(i2,i3) ... C_2(in,i1)]` (needs
//! `i1 = i2`, `i3 = i4`, ...), both times `(e^2 g)^(n/2)` with
//! `g = 1/(s^2 + e^2 nu^2)`. The two must agree; the tests check it.

use std::fmt;

use nalgebra::{DMatrix, Matrix3, Vector3};
use serde::Serialize;

use crate::error::{CplabError, Result};
use crate::model::{lattice_norm, ChargeProfile, ConstraintReport, Geometry, Lattice, ModelParams};
use crate::oscillator::{build_coupling, field_frequencies_sq};
use crate::quad::{compensated_sum, integrate_half_line_vec, QuadSpec};

/// A word `I = (i1, ..., in)` over the electron labels {1, 2}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct IndexWord(Vec<u8>);

impl IndexWord {
    pub fn new(letters: &[u8]) -> Result<Self> {
        if letters.is_empty() {
            return Err(CplabError::invalid(
                "word",
                "must contain at least one letter",
            ));
        }
        if let Some(bad) = letters.iter().find(|l| !matches!(l, 1 | 2)) {
            return Err(CplabError::invalid(
                "word",
                format!("letters must be 1 or 2, got {bad}"),
            ));
        }
        Ok(IndexWord(letters.to_vec()))
    }

    /// Parses strings such as `"1122"`.
    pub fn parse(text: &str) -> Result<Self> {
        let letters: Option<Vec<u8>> = text
            .chars()
            .map(|c| match c {
                '1' => Some(1),
                '2' => Some(2),
                _ => None,
            })
            .collect();
        match letters {
            Some(l) => IndexWord::new(&l),
            None => Err(CplabError::invalid(
                "word",
                format!("`{text}` is not a string over 1 and 2"),
            )),
        }
    }

    pub fn letters(&self) -> &[u8] {
        &self.0
    }

    /// `|I|`, the sum of the letters.
    pub fn weight(&self) -> usize {
        self.0.iter().map(|&l| l as usize).sum()
    }

    /// `#I`, the number of letters.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Number of adjacent positions where the label changes.
    pub fn transitions(&self) -> usize {
        self.0.windows(2).filter(|w| w[0] != w[1]).count()
    }

    /// True when both electrons appear.
    pub fn is_mixed(&self) -> bool {
        self.0.contains(&1) && self.0.contains(&2)
    }
}

impl fmt::Display for IndexWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.0 {
            write!(f, "{l}")?;
        }
        Ok(())
    }
}

/// How a word enters the binding expansion and its a priori bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WordClass {
    /// One of the two letters occurs an odd number of times (odd `|I|` or
    /// odd length); the trace vanishes identically.
    OddWeight,
    /// Only one electron appears; cancels in the binding energy.
    Pure,
    /// Mixed word of length four, the reference order.
    OrderFour,
    /// Mixed, longer, with exactly one change of label.
    CaseOne,
    /// Mixed, longer, with at least two changes of label.
    CaseTwo,
}

pub fn classify_word(word: &IndexWord) -> WordClass {
    if word.weight() % 2 == 1 || word.len() % 2 == 1 {
        WordClass::OddWeight
    } else if !word.is_mixed() {
        WordClass::Pure
    } else if word.len() == 4 {
        WordClass::OrderFour
    } else if word.transitions() == 1 {
        WordClass::CaseOne
    } else {
        WordClass::CaseTwo
    }
}

/// All `2^n` words of length `n` in lexicographic order.
pub fn words_of_length(n: usize) -> Vec<IndexWord> {
    (0..1usize << n)
        .map(|bits| {
            IndexWord(
                (0..n)
                    .map(|i| if bits >> (n - 1 - i) & 1 == 1 { 2 } else { 1 })
                    .collect(),
            )
        })
        .collect()
}

/// Mixed words of length `n` with even weight, the ones that survive in the
/// binding series.
pub fn mixed_even_words(n: usize) -> Vec<IndexWord> {
    words_of_length(n)
        .into_iter()
        .filter(|w| w.is_mixed() && w.weight() % 2 == 0)
        .collect()
}

/// Which integrand evaluation to use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TracePath {
    Dense,
    Factorized,
}

/// Settings for the integral over `s`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    /// Cap on adaptive subintervals.
    pub max_intervals: usize,
    /// Scale of the map `s = scale u / (1 - u)`; `None` picks `e nu`.
    pub scale: Option<f64>,
    pub path: TracePath,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            rel_tol: 1e-10,
            max_intervals: 4000,
            scale: None,
            path: TracePath::Factorized,
        }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol < 1.0) {
            return Err(CplabError::invalid(
                "quad_rel_tol",
                format!("must lie in (0, 1), got {rel_tol}"),
            ));
        }
        Ok(QuadratureSpec {
            rel_tol,
            ..QuadratureSpec::default()
        })
    }

    fn quad_spec(&self) -> QuadSpec {
        QuadSpec {
            rel_tol: self.rel_tol,
            abs_tol: 0.0,
            max_intervals: self.max_intervals.max(8),
        }
    }
}

/// One evaluated trace term.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceValue {
    pub value: f64,
    pub error: f64,
}

/// The 3x3 chain matrices at one value of `s`, indexed `[w-1][a][b]`.
#[derive(Clone, Debug)]
pub struct ChainMatrices {
    pub c: [Vec<Vec<Matrix3<f64>>>; 2],
    /// `e^2 / (s^2 + e^2 nu^2)`.
    pub particle_weight: f64,
    /// `1 / (s^2 + e^2 nu^2)`.
    pub particle_resolvent: f64,
}

/// Coupling data for one or two electrons on a fixed lattice.
#[derive(Clone, Debug)]
pub struct TraceSystem {
    params: ModelParams,
    couplings: Vec<DMatrix<f64>>,
    field_sq: Vec<f64>,
    /// `(|k|^2, (2 pi / L)^3 |k|^2 rho^2)` per lattice point with nonzero weight.
    envelope_weights: Vec<(f64, f64)>,
    lattice_norm: f64,
}

impl TraceSystem {
    pub fn one_electron(params: &ModelParams, lattice: &Lattice, profile: &ChargeProfile) -> Self {
        Self::at_positions(params, lattice, profile, &[Vector3::zeros()])
    }

    pub fn two_electron(
        params: &ModelParams,
        lattice: &Lattice,
        profile: &ChargeProfile,
        geometry: &Geometry,
    ) -> Self {
        Self::at_positions(
            params,
            lattice,
            profile,
            &[Vector3::zeros(), geometry.position()],
        )
    }

    /// Electrons at arbitrary positions; one or two are supported by the
    /// word alphabet.
    pub fn at_positions(
        params: &ModelParams,
        lattice: &Lattice,
        profile: &ChargeProfile,
        positions: &[Vector3<f64>],
    ) -> Self {
        let couplings = positions
            .iter()
            .map(|x| build_coupling(x, lattice, profile).entries)
            .collect();
        let w = lattice.cell_weight();
        let envelope_weights = lattice
            .points()
            .iter()
            .map(|p| {
                (
                    p.norm * p.norm,
                    w * p.norm * p.norm * profile.value_sq(p.norm),
                )
            })
            .filter(|(_, c)| *c > 0.0)
            .collect();
        TraceSystem {
            params: *params,
            couplings,
            field_sq: field_frequencies_sq(lattice),
            envelope_weights,
            lattice_norm: lattice_norm(profile, lattice, 0),
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn electrons(&self) -> usize {
        self.couplings.len()
    }

    /// `3 n_e + 4N`.
    pub fn dimension(&self) -> usize {
        3 * self.electrons() + self.field_sq.len()
    }

    /// `a = (sqrt(2) ||rho||_* / nu)^2`, the geometric ratio of the series.
    pub fn a(&self) -> f64 {
        let q = std::f64::consts::SQRT_2 * self.lattice_norm / self.params.nu();
        q * q
    }

    fn particle_sq(&self) -> f64 {
        self.params.e * self.params.e * self.params.nu_sq()
    }

    fn check_word(&self, word: &IndexWord) -> Result<()> {
        match word
            .letters()
            .iter()
            .find(|&&l| l as usize > self.electrons())
        {
            Some(l) => Err(CplabError::invalid(
                "word",
                format!(
                    "letter {l} in {word} exceeds the {} electron(s) of the system",
                    self.electrons()
                ),
            )),
            None => Ok(()),
        }
    }

    /// Diagonal of `G(s) = (s^2 + Omega0)^-1`.
    pub fn resolvent_diag(&self, s: f64) -> Vec<f64> {
        let s2 = s * s;
        let gp = 1.0 / (s2 + self.particle_sq());
        let mut g = vec![gp; 3 * self.electrons()];
        g.extend(self.field_sq.iter().map(|k2| 1.0 / (s2 + k2)));
        g
    }

    /// Unscaled coupling `Q_i` (1-based `i`) as a dense symmetric matrix.
    pub fn coupling_dense(&self, i: usize) -> DMatrix<f64> {
        let d = self.dimension();
        let p = 3 * self.electrons();
        let t = &self.couplings[i - 1] * self.params.e;
        let mut q = DMatrix::zeros(d, d);
        q.view_mut((3 * (i - 1), p), (3, t.ncols())).copy_from(&t);
        q.view_mut((p, 3 * (i - 1)), (t.ncols(), 3))
            .copy_from(&t.transpose());
        q
    }

    /// `Q_i(s) = G^1/2 Q_i G^1/2`.
    pub fn scaled_coupling(&self, i: usize, s: f64) -> DMatrix<f64> {
        let half: Vec<f64> = self.resolvent_diag(s).into_iter().map(f64::sqrt).collect();
        let mut q = self.coupling_dense(i);
        for c in 0..q.ncols() {
            for r in 0..q.nrows() {
                q[(r, c)] *= half[r] * half[c];
            }
        }
        q
    }

    /// `T(x_i) (s^2 + S0)^-1/2`, the field-weighted coupling of one electron.
    pub fn weighted_coupling(&self, i: usize, s: f64) -> DMatrix<f64> {
        let mut t = self.couplings[i - 1].clone();
        for (c, k2) in self.field_sq.iter().enumerate() {
            let w = 1.0 / (s * s + k2).sqrt();
            t.column_mut(c).scale_mut(w);
        }
        t
    }

    /// Chain matrices at `s`.
    pub fn chain_matrices(&self, s: f64) -> ChainMatrices {
        let ne = self.electrons();
        let s2 = s * s;
        let mut c = [
            vec![vec![Matrix3::zeros(); ne]; ne],
            vec![vec![Matrix3::zeros(); ne]; ne],
        ];
        let mut cols = vec![Vector3::zeros(); ne];
        for (j, k2) in self.field_sq.iter().enumerate() {
            let r1 = 1.0 / (s2 + k2);
            let r2 = r1 * r1;
            for (a, col) in cols.iter_mut().enumerate() {
                *col = self.couplings[a].fixed_view::<3, 1>(0, j).into_owned();
            }
            if cols.iter().all(|v| v.iter().all(|x| *x == 0.0)) {
                continue;
            }
            for a in 0..ne {
                for b in a..ne {
                    let outer = cols[a] * cols[b].transpose();
                    c[0][a][b] += outer * r1;
                    c[1][a][b] += outer * r2;
                }
            }
        }
        for w in 0..2 {
            for a in 0..ne {
                for b in 0..a {
                    c[w][a][b] = c[w][b][a].transpose();
                }
            }
        }
        let gp = 1.0 / (s2 + self.particle_sq());
        ChainMatrices {
            c,
            particle_weight: self.params.e * self.params.e * gp,
            particle_resolvent: gp,
        }
    }

    /// `s^2 tr[G Q_I(s)]` through the chain matrices.
    pub fn integrand_factorized(&self, word: &IndexWord, s: f64) -> Result<f64> {
        self.check_word(word)?;
        Ok(chain_integrand(word.letters(), s, &self.chain_matrices(s)))
    }

    /// `s^2 tr[G Q_I(s)]` by dense matrix products.
    pub fn integrand_dense(&self, word: &IndexWord, s: f64) -> Result<f64> {
        Ok(self.integrands_dense(std::slice::from_ref(word), s)?[0])
    }

    /// Dense integrands for many words, sharing prefix products between
    /// words visited in lexicographic order.
    pub fn integrands_dense(&self, words: &[IndexWord], s: f64) -> Result<Vec<f64>> {
        for w in words {
            self.check_word(w)?;
        }
        let g = self.resolvent_diag(s);
        let q: Vec<DMatrix<f64>> = (1..=self.electrons())
            .map(|i| self.scaled_coupling(i, s))
            .collect();
        let mut order: Vec<usize> = (0..words.len()).collect();
        order.sort_by(|&a, &b| words[a].cmp(&words[b]));
        let mut out = vec![0.0; words.len()];
        let mut stack: Vec<(u8, DMatrix<f64>)> = Vec::new();
        for idx in order {
            let letters = words[idx].letters();
            let common = stack
                .iter()
                .zip(letters)
                .take_while(|((l, _), c)| l == *c)
                .count();
            stack.truncate(common);
            for (j, &l) in letters.iter().enumerate().skip(common) {
                let next = if j == 0 {
                    q[l as usize - 1].clone()
                } else {
                    &stack[j - 1].1 * &q[l as usize - 1]
                };
                stack.push((l, next));
            }
            let p = &stack[letters.len() - 1].1;
            let tr = compensated_sum(g.iter().enumerate().map(|(i, gi)| gi * p[(i, i)]));
            out[idx] = s * s * tr;
        }
        Ok(out)
    }

    pub fn integrand(&self, word: &IndexWord, s: f64, path: TracePath) -> Result<f64> {
        match path {
            TracePath::Dense => self.integrand_dense(word, s),
            TracePath::Factorized => self.integrand_factorized(word, s),
        }
    }

    /// `D(s)`, the envelope dominating every one-electron series term.
    pub fn d_envelope(&self, s: f64) -> f64 {
        let s2 = s * s;
        let ap = self.particle_sq();
        let w1 = compensated_sum(self.envelope_weights.iter().map(|(k2, c)| c / (s2 + k2)));
        let w2 = compensated_sum(
            self.envelope_weights
                .iter()
                .map(|(k2, c)| c / ((s2 + k2) * (s2 + k2))),
        );
        let e2 = self.params.e * self.params.e;
        2.0 * e2 * s2 / (s2 + ap) * (w1 / (s2 + ap) + w2)
    }

    /// `(1/2 pi) int_R D(s) ds`.
    pub fn d_envelope_integral(&self, quad: &QuadratureSpec) -> Result<TraceValue> {
        let scale = quad.scale.unwrap_or(self.params.e_nu());
        let r = integrate_half_line_vec(
            |s, out: &mut [f64]| out[0] = self.d_envelope(s),
            1,
            scale,
            &quad.quad_spec(),
        );
        if !r.converged {
            return Err(accuracy(
                "envelope integral",
                r.values[0],
                r.errors[0],
                quad.rel_tol,
            ));
        }
        Ok(TraceValue {
            value: r.values[0] / std::f64::consts::PI,
            error: r.errors[0] / std::f64::consts::PI,
        })
    }
}

fn accuracy(context: &str, estimate: f64, error: f64, requested: f64) -> CplabError {
    CplabError::Accuracy {
        context: context.to_string(),
        estimate,
        error,
        requested,
    }
}

fn chain_product<'a, I: Iterator<Item = &'a Matrix3<f64>>>(mut factors: I) -> Matrix3<f64> {
    let first = *factors.next().expect("chain needs at least one factor");
    factors.fold(first, |acc, m| acc * m)
}

fn chain_integrand(l: &[u8], s: f64, ch: &ChainMatrices) -> f64 {
    let n = l.len();
    if n % 2 == 1 {
        return 0.0;
    }
    let m = n / 2;
    let idx = |j: usize| l[j] as usize - 1;
    let c1 = &ch.c[0];
    let c2 = &ch.c[1];

    let particle_ok = l[0] == l[n - 1] && (1..m).all(|p| l[2 * p - 1] == l[2 * p]);
    let particle = if particle_ok {
        ch.particle_resolvent
            * chain_product((0..m).map(|p| &c1[idx(2 * p)][idx(2 * p + 1)])).trace()
    } else {
        0.0
    };

    let field_ok = (0..m).all(|p| l[2 * p] == l[2 * p + 1]);
    let field = if field_ok {
        let last = &c2[idx(n - 1)][idx(0)];
        if m == 1 {
            last.trace()
        } else {
            (chain_product((1..m).map(|p| &c1[idx(2 * p - 1)][idx(2 * p)])) * last).trace()
        }
    } else {
        0.0
    };

    s * s * ch.particle_weight.powi(m as i32) * (particle + field)
}

/// Evaluates several trace terms on shared quadrature nodes.
pub fn trace_words(
    words: &[IndexWord],
    system: &TraceSystem,
    quad: &QuadratureSpec,
) -> Result<Vec<TraceValue>> {
    for w in words {
        system.check_word(w)?;
    }
    if words.is_empty() {
        return Ok(Vec::new());
    }
    let scale = quad.scale.unwrap_or(system.params.e_nu());
    let mut failure = None;
    let r = integrate_half_line_vec(
        |s, out: &mut [f64]| match quad.path {
            TracePath::Factorized => {
                let ch = system.chain_matrices(s);
                for (o, w) in out.iter_mut().zip(words) {
                    *o = chain_integrand(w.letters(), s, &ch);
                }
            }
            TracePath::Dense => match system.integrands_dense(words, s) {
                Ok(v) => out.copy_from_slice(&v),
                Err(e) => failure = Some(e),
            },
        },
        words.len(),
        scale,
        &quad.quad_spec(),
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let pi = std::f64::consts::PI;
    if !r.converged {
        let (i, _) = r
            .errors
            .iter()
            .zip(&r.values)
            .enumerate()
            .map(|(i, (e, v))| (i, e / v.abs().max(f64::MIN_POSITIVE)))
            .fold(
                (0, -1.0),
                |best, cur| if cur.1 > best.1 { cur } else { best },
            );
        return Err(accuracy(
            &format!("trace of word {}", words[i]),
            r.values[i] / pi,
            r.errors[i] / pi,
            quad.rel_tol,
        ));
    }
    Ok(r.values
        .iter()
        .zip(&r.errors)
        .map(|(v, e)| TraceValue {
            value: v / pi,
            error: e / pi,
        })
        .collect())
}

/// `<Q_I>` for a single word.
pub fn trace_word(
    word: &IndexWord,
    system: &TraceSystem,
    quad: &QuadratureSpec,
) -> Result<TraceValue> {
    Ok(trace_words(std::slice::from_ref(word), system, quad)?[0])
}

/// Contribution of one order `2j` to a series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OrderTerm {
    pub order: usize,
    pub value: f64,
    pub quadrature_error: f64,
}

/// Truncated series with its rigorous geometric tail.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceSeries {
    pub orders: Vec<OrderTerm>,
    /// Sum of the trace terms alone.
    pub partial_sum: f64,
    /// The energy or binding energy the series represents.
    pub value: f64,
    /// Infinite when the geometric majorant diverges.
    pub tail_bound: f64,
    pub quadrature_error: f64,
    pub a: f64,
    pub envelope_integral: f64,
    /// True when a finite tail bound exists.
    pub converged: bool,
}

fn check_order(max_order: usize) -> Result<usize> {
    if max_order < 2 || max_order % 2 == 1 {
        return Err(CplabError::invalid(
            "max_order",
            format!("must be even and at least 2, got {max_order}"),
        ));
    }
    Ok(max_order / 2)
}

/// `E = -sum_{j <= J} <Q1^(2j)> + (3/2) e nu`, with `J = max_order / 2`.
pub fn series_one_electron(
    system: &TraceSystem,
    max_order: usize,
    quad: &QuadratureSpec,
) -> Result<TraceSeries> {
    let j_max = check_order(max_order)?;
    let a = system.a();
    if a >= 1.0 {
        return Err(CplabError::SeriesDivergence { a, limit: 1.0 });
    }
    let words: Vec<IndexWord> = (1..=j_max).map(|j| IndexWord(vec![1; 2 * j])).collect();
    let traces = trace_words(&words, system, quad)?;
    let orders: Vec<OrderTerm> = traces
        .iter()
        .enumerate()
        .map(|(j, t)| OrderTerm {
            order: 2 * (j + 1),
            value: t.value,
            quadrature_error: t.error,
        })
        .collect();
    let partial_sum = compensated_sum(orders.iter().map(|o| o.value));
    let envelope = system.d_envelope_integral(quad)?;
    let tail_bound = a.powi(j_max as i32) / (1.0 - a) * envelope.value;
    Ok(TraceSeries {
        partial_sum,
        value: -partial_sum + 1.5 * system.params.e_nu(),
        tail_bound,
        quadrature_error: orders.iter().map(|o| o.quadrature_error).sum::<f64>() + envelope.error,
        orders,
        a,
        envelope_integral: envelope.value,
        converged: true,
    })
}

/// Binding energy `2E - E(R) = sum <Q_I>` over mixed even-weight words of
/// length up to `max_order`.
///
/// With `a >= 1/4` the tail has no geometric majorant; this returns an
/// error unless `allow_unbounded`, in which case the value comes back with
/// an infinite tail and `converged = false`.
pub fn series_binding(
    system: &TraceSystem,
    max_order: usize,
    quad: &QuadratureSpec,
    allow_unbounded: bool,
) -> Result<TraceSeries> {
    let j_max = check_order(max_order)?;
    if system.electrons() != 2 {
        return Err(CplabError::invalid(
            "system",
            "binding series needs two electrons",
        ));
    }
    let a = system.a();
    let bounded = a < 0.25;
    if !bounded && !allow_unbounded {
        return Err(CplabError::SeriesDivergence { a, limit: 0.25 });
    }
    let mut words = Vec::new();
    let mut spans = Vec::new();
    for j in 1..=j_max {
        let w = mixed_even_words(2 * j);
        spans.push((2 * j, words.len(), words.len() + w.len()));
        words.extend(w);
    }
    let traces = trace_words(&words, system, quad)?;
    let orders: Vec<OrderTerm> = spans
        .iter()
        .map(|&(order, lo, hi)| OrderTerm {
            order,
            value: compensated_sum(traces[lo..hi].iter().map(|t| t.value)),
            quadrature_error: traces[lo..hi].iter().map(|t| t.error).sum(),
        })
        .collect();
    let partial_sum = compensated_sum(orders.iter().map(|o| o.value));
    let envelope = system.d_envelope_integral(quad)?;
    let tail_bound = if bounded {
        4f64.powi(j_max as i32 + 1) * a.powi(j_max as i32) / (1.0 - 4.0 * a) * envelope.value
    } else {
        f64::INFINITY
    };
    Ok(TraceSeries {
        partial_sum,
        value: partial_sum,
        tail_bound,
        quadrature_error: orders.iter().map(|o| o.quadrature_error).sum::<f64>() + envelope.error,
        orders,
        a,
        envelope_integral: envelope.value,
        converged: bounded,
    })
}

/// `D(s)` for one electron on the given lattice.
pub fn d_envelope(s: f64, params: &ModelParams, profile: &ChargeProfile, lattice: &Lattice) -> f64 {
    TraceSystem::one_electron(params, lattice, profile).d_envelope(s)
}

/// A priori multiplier for `|<Q_I>|` relative to the order-four reference.
///
/// Case one words scale like `(||rho||^2 / 3 nu^2)^(#I/2 - 2)` with the
/// continuum norm, case two words like `c_L^(#I - 4)`. Odd-weight words
/// vanish, so their bound is zero. Existence constants in front are taken
/// as one.
pub fn word_bound(word: &IndexWord, report: &ConstraintReport) -> Result<f64> {
    let fail = |reason: &str| {
        Err(CplabError::Classification {
            word: word.to_string(),
            reason: reason.to_string(),
        })
    };
    if word.len() == 4 && word.is_mixed() {
        return Ok(1.0);
    }
    if word.len() < 6 {
        return fail("shorter than six letters and not a mixed order-four word");
    }
    match classify_word(word) {
        WordClass::OddWeight => Ok(0.0),
        WordClass::Pure => fail("pure words cancel in the binding energy and carry no bound"),
        WordClass::OrderFour => Ok(1.0),
        WordClass::CaseOne => {
            let rho = report.continuum_norms[1];
            Ok((rho * rho / (3.0 * report.nu * report.nu)).powi(word.len() as i32 / 2 - 2))
        }
        WordClass::CaseTwo => Ok(report.c_l.powi(word.len() as i32 - 4)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_enumeration_is_lexicographic() {
        let w = words_of_length(3);
        assert_eq!(w.len(), 8);
        assert_eq!(w[0].letters(), &[1, 1, 1]);
        assert_eq!(w[1].letters(), &[1, 1, 2]);
        assert_eq!(w[7].letters(), &[2, 2, 2]);
        assert_eq!(mixed_even_words(4).len(), 6);
    }

    #[test]
    fn classification() {
        let w = |s: &str| IndexWord::parse(s).unwrap();
        assert_eq!(classify_word(&w("112")), WordClass::OddWeight);
        assert_eq!(classify_word(&w("1111")), WordClass::Pure);
        assert_eq!(classify_word(&w("1221")), WordClass::OrderFour);
        assert_eq!(classify_word(&w("111122")), WordClass::CaseOne);
        assert_eq!(classify_word(&w("11222211")), WordClass::CaseTwo);
        assert!(IndexWord::parse("13").is_err());
        assert!(IndexWord::new(&[]).is_err());
    }
}
