//! Token-level Levenshtein alignment with a deterministic backtrace.

/// One aligned position of the edit script. Indices refer to the
/// reference and hypothesis token streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match { ref_idx: usize, hyp_idx: usize },
    Substitute { ref_idx: usize, hyp_idx: usize },
    Delete { ref_idx: usize },
    Insert { hyp_idx: usize },
}

impl EditOp {
    pub fn is_error(&self) -> bool {
        !matches!(self, EditOp::Match { .. })
    }
}

/// Minimal-cost alignment under unit costs. Where several predecessors
/// tie, the backtrace prefers match over substitution over deletion over
/// insertion, making the script deterministic.
pub fn levenshtein_align<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Vec<EditOp> {
    let (m, n) = (reference.len(), hypothesis.len());
    let mut cost = vec![vec![0usize; n + 1]; m + 1];
    for (i, row) in cost.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=n {
        cost[0][j] = j;
    }
    for i in 1..=m {
        for j in 1..=n {
            let sub = cost[i - 1][j - 1]
                + usize::from(reference[i - 1].as_ref() != hypothesis[j - 1].as_ref());
            let del = cost[i - 1][j] + 1;
            let ins = cost[i][j - 1] + 1;
            cost[i][j] = sub.min(del).min(ins);
        }
    }

    let mut ops = Vec::with_capacity(m.max(n));
    let (mut i, mut j) = (m, n);
    while i > 0 || j > 0 {
        let c = cost[i][j];
        if i > 0 && j > 0 && reference[i - 1].as_ref() == hypothesis[j - 1].as_ref() && cost[i - 1][j - 1] == c {
            ops.push(EditOp::Match { ref_idx: i - 1, hyp_idx: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && j > 0 && cost[i - 1][j - 1] + 1 == c {
            ops.push(EditOp::Substitute { ref_idx: i - 1, hyp_idx: j - 1 });
            i -= 1;
            j -= 1;
        } else if i > 0 && cost[i - 1][j] + 1 == c {
            ops.push(EditOp::Delete { ref_idx: i - 1 });
            i -= 1;
        } else {
            ops.push(EditOp::Insert { hyp_idx: j - 1 });
            j -= 1;
        }
    }
    ops.reverse();
    ops
}

/// Total edit cost of a script (substitutions + deletions + insertions).
pub fn script_cost(ops: &[EditOp]) -> usize {
    ops.iter().filter(|op| op.is_error()).count()
}
