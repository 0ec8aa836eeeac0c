//! Minimal sparse vector utilities for program assembly and presolve.

/// Sparse vector: strictly increasing indices, no explicit zeros.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseVec {
    pub terms: Vec<(usize, f64)>,
}

impl SparseVec {
    pub fn new() -> Self {
        Self { terms: Vec::new() }
    }

    pub fn unit(idx: usize) -> Self {
        Self {
            terms: vec![(idx, 1.0)],
        }
    }

    pub fn from_terms(mut terms: Vec<(usize, f64)>) -> Self {
        terms.sort_by_key(|&(i, _)| i);
        let mut out: Vec<(usize, f64)> = Vec::with_capacity(terms.len());
        for (i, v) in terms {
            if v == 0.0 {
                continue;
            }
            match out.last_mut() {
                Some((j, w)) if *j == i => *w += v,
                _ => out.push((i, v)),
            }
        }
        out.retain(|&(_, v)| v != 0.0);
        Self { terms: out }
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn get(&self, idx: usize) -> f64 {
        match self.terms.binary_search_by_key(&idx, |&(i, _)| i) {
            Ok(k) => self.terms[k].1,
            Err(_) => 0.0,
        }
    }

    pub fn scale(&mut self, c: f64) {
        if c == 0.0 {
            self.terms.clear();
        } else {
            for (_, v) in &mut self.terms {
                *v *= c;
            }
        }
    }

    /// `self += c * other`, dropping exact zeros.
    pub fn axpy(&mut self, c: f64, other: &SparseVec) {
        if c == 0.0 || other.terms.is_empty() {
            return;
        }
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut a, mut b) = (0, 0);
        while a < self.terms.len() || b < other.terms.len() {
            let ia = self.terms.get(a).map(|t| t.0).unwrap_or(usize::MAX);
            let ib = other.terms.get(b).map(|t| t.0).unwrap_or(usize::MAX);
            if ia < ib {
                out.push(self.terms[a]);
                a += 1;
            } else if ib < ia {
                out.push((ib, c * other.terms[b].1));
                b += 1;
            } else {
                let v = self.terms[a].1 + c * other.terms[b].1;
                if v != 0.0 {
                    out.push((ia, v));
                }
                a += 1;
                b += 1;
            }
        }
        self.terms = out;
    }

    /// Remove a single index, returning its coefficient if present.
    pub fn remove(&mut self, idx: usize) -> Option<f64> {
        match self.terms.binary_search_by_key(&idx, |&(i, _)| i) {
            Ok(k) => Some(self.terms.remove(k).1),
            Err(_) => None,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.terms.iter().map(|&(_, v)| v.abs()).fold(0.0, f64::max)
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(i, v)| v * x[i]).sum()
    }
}
