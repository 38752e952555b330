//! Concave piecewise-linear functions on `[0, 1]`, stored as the lower
//! envelope of their linear pieces.

use thiserror::Error;

/// Pieces whose attaining interval is shorter than this are dropped.
pub const PRUNE_WIDTH: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PwlError {
    #[error("no pieces")]
    Empty,
    #[error("non-finite piece coefficient")]
    NonFinite,
}

/// `eta + beta * b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearPiece {
    pub eta: f64,
    pub beta: f64,
}

impl LinearPiece {
    pub const fn new(eta: f64, beta: f64) -> Self {
        Self { eta, beta }
    }

    pub const fn constant(c: f64) -> Self {
        Self { eta: c, beta: 0.0 }
    }

    #[inline]
    pub fn eval(&self, b: f64) -> f64 {
        self.eta + self.beta * b
    }

    /// Abscissa where `other` meets `self`; `None` for parallel pieces.
    fn crossing(&self, other: &LinearPiece) -> Option<f64> {
        let dslope = self.beta - other.beta;
        if dslope == 0.0 {
            None
        } else {
            Some((other.eta - self.eta) / dslope)
        }
    }
}

/// Pointwise minimum of linear pieces, pruned to those that attain it on a
/// subinterval of `[0, 1]`. Pieces are ordered left to right, so slopes are
/// strictly decreasing.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlValue {
    pieces: Vec<LinearPiece>,
}

impl PwlValue {
    pub fn single(piece: LinearPiece) -> Self {
        Self {
            pieces: vec![piece],
        }
    }

    pub fn pieces(&self) -> &[LinearPiece] {
        &self.pieces
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn eval(&self, b: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| p.eval(b))
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior abscissae where the active piece changes.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.pieces
            .windows(2)
            .filter_map(|w| w[0].crossing(&w[1]))
            .collect()
    }

    /// Adds a linear function to every piece; the envelope is unchanged in shape.
    pub fn add_linear(&self, head: LinearPiece) -> Self {
        Self {
            pieces: self
                .pieces
                .iter()
                .map(|p| LinearPiece::new(p.eta + head.eta, p.beta + head.beta))
                .collect(),
        }
    }

    /// Pointwise minimum with another function.
    pub fn min_with(&self, other: &PwlValue) -> Self {
        let mut all = self.pieces.clone();
        all.extend_from_slice(&other.pieces);
        lower_envelope(all).expect("both operands are nonempty")
    }
}

/// Minimal set of pieces reproducing the pointwise minimum on `[0, 1]`.
pub fn lower_envelope<I>(pieces: I) -> Result<PwlValue, PwlError>
where
    I: IntoIterator<Item = LinearPiece>,
{
    let mut cand: Vec<LinearPiece> = pieces.into_iter().collect();
    if cand.is_empty() {
        return Err(PwlError::Empty);
    }
    if cand.iter().any(|p| !(p.eta.is_finite() && p.beta.is_finite())) {
        return Err(PwlError::NonFinite);
    }
    // Steepest first; among equal slopes only the lowest can ever be active.
    cand.sort_by(|a, b| b.beta.total_cmp(&a.beta).then(a.eta.total_cmp(&b.eta)));
    cand.dedup_by(|later, earlier| later.beta == earlier.beta);

    // Piece active at b = 0: lowest value, ties broken toward the smaller
    // slope since it stays lower to the right.
    let mut cur = 0usize;
    for (i, p) in cand.iter().enumerate().skip(1) {
        let (v, vc) = (p.eval(0.0), cand[cur].eval(0.0));
        if v < vc || (v == vc && p.beta < cand[cur].beta) {
            cur = i;
        }
    }

    let mut hull = vec![cand[cur]];
    let mut starts = vec![0.0_f64];
    let mut x = 0.0_f64;
    loop {
        // Among flatter pieces, the next to take over is the one crossing
        // first; ties go to the flattest.
        let active = cand[cur];
        let mut next: Option<(usize, f64)> = None;
        for (j, p) in cand.iter().enumerate().skip(cur + 1) {
            let Some(cx) = active.crossing(p) else { continue };
            let cx = cx.max(x);
            match next {
                Some((_, best)) if cx > best => {}
                Some((nj, best)) if cx == best && p.beta >= cand[nj].beta => {}
                _ => next = Some((j, cx)),
            }
        }
        match next {
            Some((j, cx)) if cx < 1.0 => {
                hull.push(cand[j]);
                starts.push(cx);
                cur = j;
                x = cx;
            }
            _ => break,
        }
    }

    // Drop pieces with negligible attaining intervals.
    let n = hull.len();
    let mut kept: Vec<LinearPiece> = Vec::with_capacity(n);
    for i in 0..n {
        let end = if i + 1 < n { starts[i + 1] } else { 1.0 };
        if end - starts[i] >= PRUNE_WIDTH {
            kept.push(hull[i]);
        }
    }
    if kept.is_empty() {
        // Every interval collapsed (e.g. all pieces meet at one point);
        // the piece active at the right end still represents the minimum.
        kept.push(hull[n - 1]);
    }
    Ok(PwlValue { pieces: kept })
}
