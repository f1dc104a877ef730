//! Additive character sums over evaluation sets, and audits of the
//! Weil-type bounds the decision theorems rely on.

use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalsets::{dickson_eval, image_set, EvalSetDesc};
use crate::field::{FieldCtx, FieldElement};

/// Absolute slack for every audited inequality.
pub const EPS_NUM: f64 = 1e-6;

/// Tolerance for the equality of the two even-q twisted sums.
pub const TWIN_TOL: f64 = 1e-9;

/// Largest field swept exhaustively; phase tables hold `q^2` entries each.
pub const EXHAUSTIVE_MAX_Q: u64 = 4096;

/// `psi_c(x) = exp(2 pi i Tr(c x) / p)`.
pub fn additive_character(ctx: &FieldCtx, c: FieldElement, x: FieldElement) -> Complex64 {
    let t = ctx.trace(ctx.mul(c, x));
    root_of_unity(t, ctx.p())
}

fn root_of_unity(t: u32, p: u32) -> Complex64 {
    if t == 0 {
        return Complex64::new(1.0, 0.0);
    }
    if p == 2 {
        return Complex64::new(-1.0, 0.0);
    }
    Complex64::from_polar(1.0, 2.0 * PI * t as f64 / p as f64)
}

/// Pairwise (cascade) summation; error grows like `log n` rather than `n`.
pub fn pairwise_sum(xs: &[Complex64]) -> Complex64 {
    if xs.len() <= 16 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

/// `f(x) = sum_{1 <= j <= m, p does not divide j} c_j x^j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CharPoly {
    /// `coeffs[j-1] = c_j`
    coeffs: Vec<FieldElement>,
}

impl CharPoly {
    /// Rejects the zero polynomial and nonzero `c_j` with `p | j`.
    pub fn new(ctx: &FieldCtx, coeffs: Vec<FieldElement>) -> Result<Self> {
        let p = ctx.p() as usize;
        for (i, c) in coeffs.iter().enumerate() {
            ctx.element(c.encoding() as u64)?;
            if (i + 1) % p == 0 && !c.is_zero() {
                return Err(Error::InvalidArgument(format!(
                    "coefficient of x^{} must vanish in characteristic {p}",
                    i + 1
                )));
            }
        }
        if coeffs.iter().all(|c| c.is_zero()) {
            return Err(Error::InvalidArgument("character polynomial is zero".into()));
        }
        Ok(CharPoly { coeffs })
    }

    /// Unchecked; allows the zero polynomial.
    pub fn from_coeffs_unchecked(coeffs: Vec<FieldElement>) -> Self {
        CharPoly { coeffs }
    }

    pub fn coeffs(&self) -> &[FieldElement] {
        &self.coeffs
    }

    /// Number of coefficient slots.
    pub fn m(&self) -> u32 {
        self.coeffs.len() as u32
    }

    /// Actual degree; 0 for the zero polynomial.
    pub fn degree(&self) -> u32 {
        self.coeffs.iter().rposition(|c| !c.is_zero()).map_or(0, |i| i as u32 + 1)
    }

    pub fn eval(&self, ctx: &FieldCtx, x: FieldElement) -> FieldElement {
        let mut acc = FieldElement::ZERO;
        for &c in self.coeffs.iter().rev() {
            acc = ctx.mul(ctx.add(acc, c), x);
        }
        acc
    }

    /// The polynomial `c f`.
    pub fn scaled(&self, ctx: &FieldCtx, c: FieldElement) -> CharPoly {
        CharPoly {
            coeffs: self.coeffs.iter().map(|&a| ctx.mul(c, a)).collect(),
        }
    }
}

/// `sum_{x in D} psi_c(f(x))` by direct pairwise summation.
pub fn poly_char_sum(ctx: &FieldCtx, d: &[FieldElement], f: &CharPoly, c: FieldElement) -> Complex64 {
    let terms: Vec<Complex64> = d
        .iter()
        .map(|&x| additive_character(ctx, c, f.eval(ctx, x)))
        .collect();
    pairwise_sum(&terms)
}

/// Which estimate an audit checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditKind {
    /// `|sum_{x in F_q} psi(f(x))| <= (deg f - 1) sqrt q`
    CompleteField,
    /// `|sum_{y in x^n(F_q)} psi(f(y))| <= deg f sqrt q`, needs `(n+1)^2 <= q`
    MonomialImage,
    /// `|sum_{y in D_n(F_q, a)} psi(f(y))| <= (deg f n + 1) sqrt q`
    DicksonImage,
    /// `|sum_{x in F_q} psi(f(D_n(x, a)))| <= (deg f n - 1) sqrt q`
    DicksonComplete,
    /// odd q: `|sum_x eta(x^2 - 4a) psi(f(D_n(x, a)))| <= (deg f n + 1) sqrt q`
    DicksonEta,
    /// even q: `|sum_{x != 0} psi(f(D_n(x, a)) + a/x^2)| <= (deg f n + 1) sqrt q`,
    /// and the same sum with `a^{q/2}/x` in place of `a/x^2` must agree
    DicksonTwist,
}

impl AuditKind {
    /// The bound for a polynomial of degree `m` and set degree `n`.
    pub fn bound(self, q: u64, m: u32, n: u64) -> f64 {
        let sq = (q as f64).sqrt();
        let (m, n) = (m as f64, n as f64);
        match self {
            AuditKind::CompleteField => (m - 1.0) * sq,
            AuditKind::MonomialImage => m * sq,
            AuditKind::DicksonComplete => (m * n - 1.0) * sq,
            AuditKind::DicksonImage | AuditKind::DicksonEta | AuditKind::DicksonTwist => (m * n + 1.0) * sq,
        }
    }
}

/// Kinds that apply to a set; explicit sets have none.
pub fn applicable_kinds(ctx: &FieldCtx, desc: &EvalSetDesc) -> Vec<AuditKind> {
    let q = ctx.q();
    match desc {
        EvalSetDesc::Monomial { n } | EvalSetDesc::Dickson { n, a: FieldElement::ZERO } => {
            let mut out = Vec::new();
            if *n == 1 {
                out.push(AuditKind::CompleteField);
            }
            if (n + 1) * (n + 1) <= q {
                out.push(AuditKind::MonomialImage);
            }
            out
        }
        EvalSetDesc::Dickson { .. } => {
            let twist = if ctx.p() == 2 {
                AuditKind::DicksonTwist
            } else {
                AuditKind::DicksonEta
            };
            vec![AuditKind::DicksonImage, AuditKind::DicksonComplete, twist]
        }
        EvalSetDesc::Explicit { .. } => Vec::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CharSumReport {
    pub field: String,
    pub set: String,
    pub kind: AuditKind,
    /// encoding of `c` in `psi_c`
    pub character: u32,
    /// encodings of `c_1, .., c_m`
    pub coeffs: Vec<u32>,
    pub degree: u32,
    pub sum_re: f64,
    pub sum_im: f64,
    pub abs: f64,
    pub bound: f64,
    pub margin: f64,
    /// `|S - S'|` for the two forms of the even-q twisted sum
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub twin_gap: Option<f64>,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode")]
pub enum Coverage {
    /// every nonzero `f` with the canonical character `psi_1`; this covers
    /// every pair `(psi_c, f)` because `psi_c(f) = psi_1(c f)`
    Exhaustive,
    Sample { count: usize, seed: u64 },
}

/// Running totals over a stream of reports.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub tests: u64,
    pub violations: u64,
    pub min_margin: Option<f64>,
    pub worst: Option<CharSumReport>,
}

impl AuditSummary {
    pub fn add(&mut self, r: &CharSumReport) {
        self.tests += 1;
        if !r.pass {
            self.violations += 1;
        }
        if self.min_margin.is_none_or(|m| r.margin < m) {
            self.min_margin = Some(r.margin);
            self.worst = Some(r.clone());
        }
    }

    pub fn merge(&mut self, other: &AuditSummary) {
        self.tests += other.tests;
        self.violations += other.violations;
        if let (Some(m), Some(w)) = (other.min_margin, &other.worst) {
            if self.min_margin.is_none_or(|x| m < x) {
                self.min_margin = Some(m);
                self.worst = Some(w.clone());
            }
        }
    }
}

/// Audits every applicable kind for `desc`, collecting the reports.
pub fn weil_audit(ctx: &FieldCtx, desc: &EvalSetDesc, m: u32, coverage: Coverage) -> Result<Vec<CharSumReport>> {
    let mut out = Vec::new();
    for kind in applicable_kinds(ctx, desc) {
        weil_audit_kind(ctx, desc, kind, m, coverage, &mut |r| out.push(r))?;
    }
    Ok(out)
}

/// Streams the reports of one audit kind into `sink`, in a fixed order.
pub fn weil_audit_kind(
    ctx: &FieldCtx,
    desc: &EvalSetDesc,
    kind: AuditKind,
    m: u32,
    coverage: Coverage,
    sink: &mut dyn FnMut(CharSumReport),
) -> Result<()> {
    let (weights, label) = prepare(ctx, desc, kind, m)?;
    run(ctx, &weights, m, coverage, &mut |batch| {
        batch.for_each(|c, coeffs, sum, twin| sink(label.report(c, coeffs.to_vec(), sum, twin)))
    })
}

/// Like [`weil_audit_kind`] but only keeps totals and the worst report,
/// which avoids building a record per polynomial on large sweeps.
pub fn weil_audit_summary(
    ctx: &FieldCtx,
    desc: &EvalSetDesc,
    kind: AuditKind,
    m: u32,
    coverage: Coverage,
) -> Result<AuditSummary> {
    let (weights, label) = prepare(ctx, desc, kind, m)?;
    let mut summary = AuditSummary::default();
    let bounds: Vec<f64> = (0..=m).map(|deg| kind.bound(label.q, deg, label.n)).collect();
    run(ctx, &weights, m, coverage, &mut |batch| {
        let upper_degree = batch.coeffs[1..].iter().rposition(|&c| c != 0).map(|i| i + 2);
        let mut visit = |i: usize, deg: usize| {
            let sum = batch.sums[i];
            let twin = batch.twins.map(|t| t[i]);
            let twin_ok = twin.is_none_or(|t| (t - sum).norm_sqr() < TWIN_TOL * TWIN_TOL);
            // |S| above this is a violation or a new worst case
            let thr = summary
                .min_margin
                .map_or(f64::NEG_INFINITY, |x| bounds[deg] - x)
                .min(bounds[deg] + EPS_NUM);
            if !twin_ok || thr < 0.0 || sum.norm_sqr() > thr * thr {
                let mut coeffs = batch.coeffs.to_vec();
                if batch.sweep_linear {
                    coeffs[0] = i as u32;
                }
                summary.add(&label.report(batch.character, coeffs, sum, twin));
            } else {
                summary.tests += 1;
            }
        };
        if batch.sweep_linear {
            match upper_degree {
                Some(deg) => (0..batch.sums.len()).for_each(|i| visit(i, deg)),
                None => (1..batch.sums.len()).for_each(|i| visit(i, 1)),
            }
        } else {
            let deg = batch.coeffs.iter().rposition(|&c| c != 0).map_or(0, |i| i + 1);
            visit(0, deg);
        }
    })?;
    Ok(summary)
}

/// Sums for polynomials that share every coefficient except possibly the
/// linear one.
struct Batch<'a> {
    character: u32,
    coeffs: &'a [u32],
    /// when set, `sums[c]` belongs to linear coefficient `c`; otherwise
    /// there is one sum for `coeffs` as given
    sweep_linear: bool,
    sums: &'a [Complex64],
    twins: Option<&'a [Complex64]>,
}

impl Batch<'_> {
    fn for_each(&self, mut f: impl FnMut(u32, &[u32], Complex64, Option<Complex64>)) {
        if !self.sweep_linear {
            f(self.character, self.coeffs, self.sums[0], self.twins.map(|t| t[0]));
            return;
        }
        let mut coeffs = self.coeffs.to_vec();
        let zero_upper = coeffs[1..].iter().all(|&c| c == 0);
        for c1 in 0..self.sums.len() {
            if c1 == 0 && zero_upper {
                continue;
            }
            coeffs[0] = c1 as u32;
            f(self.character, &coeffs, self.sums[c1], self.twins.map(|t| t[c1]));
        }
    }
}

type Emit<'a> = dyn FnMut(&Batch<'_>) + 'a;

fn prepare(ctx: &FieldCtx, desc: &EvalSetDesc, kind: AuditKind, m: u32) -> Result<(Weights, Label)> {
    if m == 0 {
        return Err(Error::InvalidArgument("m must be at least 1".into()));
    }
    if !applicable_kinds(ctx, desc).contains(&kind) {
        return Err(Error::Hypothesis(format!("{kind:?} does not apply to {desc}")));
    }
    let weights = Weights::build(ctx, desc, kind)?;
    let label = Label {
        field: ctx.descriptor(),
        set: desc.to_string(),
        kind,
        q: ctx.q(),
        n: desc.degree().unwrap_or(1),
    };
    Ok((weights, label))
}

fn run(ctx: &FieldCtx, weights: &Weights, m: u32, coverage: Coverage, emit: &mut Emit<'_>) -> Result<()> {
    match coverage {
        Coverage::Exhaustive => sweep(ctx, weights, m, emit),
        Coverage::Sample { count, seed } => {
            sample(ctx, weights, m, count, seed, emit);
            Ok(())
        }
    }
}

struct Label {
    field: String,
    set: String,
    kind: AuditKind,
    q: u64,
    n: u64,
}

impl Label {
    fn report(&self, character: u32, coeffs: Vec<u32>, sum: Complex64, twin: Option<Complex64>) -> CharSumReport {
        let degree = coeffs.iter().rposition(|&c| c != 0).map_or(0, |i| i as u32 + 1);
        let bound = self.kind.bound(self.q, degree, self.n);
        let abs = sum.norm();
        let margin = bound - abs;
        let twin_gap = twin.map(|t| (t - sum).norm());
        let pass = margin >= -EPS_NUM && twin_gap.is_none_or(|g| g < TWIN_TOL);
        CharSumReport {
            field: self.field.clone(),
            set: self.set.clone(),
            kind: self.kind,
            character,
            coeffs,
            degree,
            sum_re: sum.re,
            sum_im: sum.im,
            abs,
            bound,
            margin,
            twin_gap,
            pass,
        }
    }
}

/// Every audited sum has the form `sum_y W(y) psi(f(y))` for a real weight.
struct Weights {
    /// `(y, W(y))` with `W(y) != 0`, by encoding
    support: Vec<(FieldElement, f64)>,
    /// second weight for the alternative even-q twist
    twin: Option<Vec<(FieldElement, f64)>>,
}

impl Weights {
    fn build(ctx: &FieldCtx, desc: &EvalSetDesc, kind: AuditKind) -> Result<Self> {
        let q = ctx.q() as usize;
        let collect = |w: Vec<f64>| -> Vec<(FieldElement, f64)> {
            w.into_iter()
                .enumerate()
                .filter(|(_, v)| *v != 0.0)
                .map(|(y, v)| (FieldElement::from_encoding(y as u32), v))
                .collect()
        };
        let (n, a) = match desc {
            EvalSetDesc::Dickson { n, a } => (*n, *a),
            EvalSetDesc::Monomial { n } => (*n, FieldElement::ZERO),
            EvalSetDesc::Explicit { .. } => unreachable!("no kinds apply"),
        };
        let mut w = vec![0.0f64; q];
        let mut twin = None;
        match kind {
            AuditKind::CompleteField => w.iter_mut().for_each(|v| *v = 1.0),
            AuditKind::MonomialImage | AuditKind::DicksonImage => {
                for y in image_set(ctx, desc)?.elements() {
                    w[y.encoding() as usize] = 1.0;
                }
            }
            AuditKind::DicksonComplete => {
                for x in ctx.elements() {
                    w[dickson_eval(ctx, n, a, x).encoding() as usize] += 1.0;
                }
            }
            AuditKind::DicksonEta => {
                let four_a = ctx.mul(ctx.from_int(4), a);
                for x in ctx.elements() {
                    let eta = ctx.quadratic_character(ctx.sub(ctx.mul(x, x), four_a))?;
                    w[dickson_eval(ctx, n, a, x).encoding() as usize] += eta as f64;
                }
            }
            AuditKind::DicksonTwist => {
                let mut alt = vec![0.0f64; q];
                let root = ctx.pow(a, ctx.q() / 2);
                for x in ctx.elements().skip(1) {
                    let y = dickson_eval(ctx, n, a, x).encoding() as usize;
                    let inv = ctx.inv(x)?;
                    let t1 = ctx.trace(ctx.mul(a, ctx.mul(inv, inv)));
                    let t2 = ctx.trace(ctx.mul(root, inv));
                    w[y] += if t1 == 0 { 1.0 } else { -1.0 };
                    alt[y] += if t2 == 0 { 1.0 } else { -1.0 };
                }
                twin = Some(collect(alt));
            }
        }
        Ok(Weights {
            support: collect(w),
            twin,
        })
    }

    fn direct(&self, ctx: &FieldCtx, f: &CharPoly, c: FieldElement) -> (Complex64, Option<Complex64>) {
        let one = |sup: &[(FieldElement, f64)]| {
            let terms: Vec<Complex64> = sup
                .iter()
                .map(|&(y, w)| additive_character(ctx, c, f.eval(ctx, y)) * w)
                .collect();
            pairwise_sum(&terms)
        };
        (one(&self.support), self.twin.as_deref().map(one))
    }
}

/// Multi-dimensional DFT over `(Z/p)^s` with the `+i` kernel, indexed by
/// base-`p` digits. After the linear change of variables `z_i = Tr(alpha^i y)`
/// the trace pairing `Tr(c y)` becomes the dot product of digit vectors, so
/// `out[c] = sum_y g(y) psi_1(c y)`.
struct TraceDft {
    p: usize,
    s: usize,
    q: usize,
    zmap: Vec<u32>,
    fft: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl TraceDft {
    fn new(ctx: &FieldCtx) -> Self {
        let (p, s, q) = (ctx.p() as usize, ctx.s() as usize, ctx.q() as usize);
        let alpha = if s == 1 {
            FieldElement::ONE
        } else {
            FieldElement::from_encoding(p as u32)
        };
        let alpha_pows: Vec<FieldElement> = (0..s as u64).map(|i| ctx.pow(alpha, i)).collect();
        let zmap = ctx
            .elements()
            .map(|y| {
                alpha_pows
                    .iter()
                    .rev()
                    .fold(0u32, |acc, &ai| acc * p as u32 + ctx.trace(ctx.mul(ai, y)))
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_inverse(p);
        let scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        TraceDft {
            p,
            s,
            q,
            zmap,
            fft,
            line: vec![Complex64::default(); q],
            scratch,
        }
    }

    /// In place: `data[z]` holds `G(z)`; afterwards `data[c] = sum_z G(z) w^{c.z}`.
    fn transform(&mut self, data: &mut [Complex64]) {
        let p = self.p;
        // the first axis is already laid out as contiguous lines
        self.fft.process_with_scratch(data, &mut self.scratch);
        let mut stride = p;
        for _ in 1..self.s {
            let block = stride * p;
            let mut k = 0;
            for base in (0..self.q).step_by(block) {
                for inner in 0..stride {
                    for j in 0..p {
                        self.line[k] = data[base + j * stride + inner];
                        k += 1;
                    }
                }
            }
            self.fft.process_with_scratch(&mut self.line, &mut self.scratch);
            k = 0;
            for base in (0..self.q).step_by(block) {
                for inner in 0..stride {
                    for j in 0..p {
                        data[base + j * stride + inner] = self.line[k];
                        k += 1;
                    }
                }
            }
            stride = block;
        }
    }
}

/// All nonzero `f` of degree at most `m` with canonical character. The
/// linear coefficient is handled by one DFT per choice of the others.
fn sweep(
    ctx: &FieldCtx,
    weights: &Weights,
    m: u32,
    emit: &mut Emit<'_>,
) -> Result<()> {
    let q = ctx.q();
    if q > EXHAUSTIVE_MAX_Q {
        return Err(Error::EnumerationCap {
            q,
            cap: EXHAUSTIVE_MAX_Q,
        });
    }
    let p = ctx.p();
    let higher: Vec<u32> = (2..=m).filter(|j| j % p != 0).collect();
    // phase[h][c * q + y] = Tr(c y^j) for the h-th higher exponent j
    let phases: Vec<Vec<u16>> = higher
        .iter()
        .map(|&j| {
            let pw: Vec<FieldElement> = ctx.elements().map(|y| ctx.pow(y, j as u64)).collect();
            let mut t = vec![0u16; (q * q) as usize];
            for c in ctx.elements().skip(1) {
                let row = &mut t[(c.encoding() as u64 * q) as usize..][..q as usize];
                for (y, &yj) in pw.iter().enumerate() {
                    row[y] = ctx.trace(ctx.mul(c, yj)) as u16;
                }
            }
            t
        })
        .collect();
    // indexed by an unreduced sum of phases, so no division in the inner loop
    let roots: Vec<Complex64> = (0..p * higher.len().max(1) as u32)
        .map(|t| root_of_unity(t % p, p))
        .collect();
    let mut dft = TraceDft::new(ctx);
    let mut buf = vec![Complex64::default(); q as usize];
    let mut twin_buf = vec![Complex64::default(); q as usize];
    let mut upper = vec![0u32; higher.len()];
    let mut coeffs = vec![0u32; m as usize];
    let total: u64 = q.pow(higher.len() as u32);
    for _ in 0..total {
        fill(&mut buf, &weights.support, &phases, &upper, q, &roots, &dft.zmap);
        dft.transform(&mut buf);
        let twin = if let Some(t) = &weights.twin {
            fill(&mut twin_buf, t, &phases, &upper, q, &roots, &dft.zmap);
            dft.transform(&mut twin_buf);
            true
        } else {
            false
        };
        for (h, &j) in higher.iter().enumerate() {
            coeffs[j as usize - 1] = upper[h];
        }
        emit(&Batch {
            character: 1,
            coeffs: &coeffs,
            sweep_linear: true,
            sums: &buf,
            twins: twin.then_some(&twin_buf[..]),
        });
        // odometer over the higher coefficients
        for u in upper.iter_mut() {
            *u += 1;
            if (*u as u64) < q {
                break;
            }
            *u = 0;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fill(
    buf: &mut [Complex64],
    support: &[(FieldElement, f64)],
    phases: &[Vec<u16>],
    upper: &[u32],
    q: u64,
    roots: &[Complex64],
    zmap: &[u32],
) {
    buf.iter_mut().for_each(|v| *v = Complex64::default());
    let row = |h: usize| &phases[h][(upper[h] as u64 * q) as usize..][..q as usize];
    match phases.len() {
        0 => {
            for &(y, w) in support {
                buf[zmap[y.encoding() as usize] as usize] += w;
            }
        }
        1 => {
            let r0 = row(0);
            for &(y, w) in support {
                let y = y.encoding() as usize;
                buf[zmap[y] as usize] += roots[r0[y] as usize] * w;
            }
        }
        _ => {
            let rows: Vec<&[u16]> = (0..phases.len()).map(row).collect();
            for &(y, w) in support {
                let y = y.encoding() as usize;
                let t: usize = rows.iter().map(|r| r[y] as usize).sum();
                buf[zmap[y] as usize] += roots[t] * w;
            }
        }
    }
}

fn sample(
    ctx: &FieldCtx,
    weights: &Weights,
    m: u32,
    count: usize,
    seed: u64,
    emit: &mut Emit<'_>,
) {
    let q = ctx.q();
    let p = ctx.p();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..count {
        let c = FieldElement::from_encoding(rng.random_range(1..q) as u32);
        let coeffs = loop {
            let v: Vec<FieldElement> = (1..=m)
                .map(|j| {
                    if j % p == 0 {
                        FieldElement::ZERO
                    } else {
                        FieldElement::from_encoding(rng.random_range(0..q) as u32)
                    }
                })
                .collect();
            if v.iter().any(|x| !x.is_zero()) {
                break v;
            }
        };
        let f = CharPoly::from_coeffs_unchecked(coeffs);
        let (sum, twin) = weights.direct(ctx, &f, c);
        let enc: Vec<u32> = f.coeffs().iter().map(|x| x.encoding()).collect();
        let twins = twin.map(|t| [t]);
        emit(&Batch {
            character: c.encoding(),
            coeffs: &enc,
            sweep_linear: false,
            sums: &[sum],
            twins: twins.as_ref().map(|t| &t[..]),
        });
    }
}
