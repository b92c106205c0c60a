//! The DP alignment must produce the true minimum edit cost. The oracle
//! here is an exhaustive search over edit scripts (recursion over the
//! three moves with branch-and-bound pruning), written independently of
//! the DP code.

use aumol_eval::{levenshtein_align, script_cost, wer};

/// Exhaustive-search minimum edit cost.
fn brute_force_cost(r: &[u8], h: &[u8]) -> usize {
    fn go(r: &[u8], h: &[u8], spent: usize, best: &mut usize) {
        if spent >= *best {
            return; // cannot beat the incumbent
        }
        if r.is_empty() {
            *best = (*best).min(spent + h.len());
            return;
        }
        if h.is_empty() {
            *best = (*best).min(spent + r.len());
            return;
        }
        let sub = usize::from(r[0] != h[0]);
        go(&r[1..], &h[1..], spent + sub, best); // match / substitute
        go(&r[1..], h, spent + 1, best); // delete
        go(r, &h[1..], spent + 1, best); // insert
    }
    let mut best = r.len() + h.len();
    go(r, h, 0, &mut best);
    best
}

fn tokens(seq: &[u8]) -> Vec<String> {
    seq.iter().map(|b| format!("w{b}")).collect()
}

/// All sequences of the given length over a `vocab`-symbol alphabet.
fn all_sequences(len: usize, vocab: u8) -> Vec<Vec<u8>> {
    let mut out = vec![vec![]];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..vocab).map(move |c| {
                    let mut t = s.clone();
                    t.push(c);
                    t
                })
            })
            .collect();
    }
    out
}

#[test]
fn dp_cost_matches_brute_force_on_all_short_pairs() {
    // exhaustive cross product over every sequence of length <= 3, vocab 3
    let mut seqs = Vec::new();
    for len in 0..=3 {
        seqs.extend(all_sequences(len, 3));
    }
    for r in &seqs {
        for h in &seqs {
            let rt = tokens(r);
            let ht = tokens(h);
            let dp = script_cost(&levenshtein_align(&rt, &ht));
            let oracle = brute_force_cost(r, h);
            assert_eq!(dp, oracle, "ref {r:?} hyp {h:?}");
        }
    }
}

#[test]
fn dp_cost_matches_brute_force_on_longer_random_pairs() {
    // deterministic linear-congruential stream; lengths up to 8, vocab 3
    let mut state = 0x2545_f491_4f6c_dd1du64;
    let mut next = move |m: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % m
    };
    for _ in 0..400 {
        let rl = next(9) as usize;
        let hl = next(9) as usize;
        let r: Vec<u8> = (0..rl).map(|_| next(3) as u8).collect();
        let h: Vec<u8> = (0..hl).map(|_| next(3) as u8).collect();
        let dp = script_cost(&levenshtein_align(&tokens(&r), &tokens(&h)));
        assert_eq!(dp, brute_force_cost(&r, &h), "ref {r:?} hyp {h:?}");
    }
}

#[test]
fn wer_counts_agree_with_script_cost() {
    let mut state = 99u64;
    let mut next = move |m: u64| {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 33) % m
    };
    for _ in 0..200 {
        let rl = 1 + next(8) as usize;
        let hl = next(9) as usize;
        let r: Vec<String> = (0..rl).map(|_| format!("w{}", next(3))).collect();
        let h: Vec<String> = (0..hl).map(|_| format!("w{}", next(3))).collect();
        let counts = wer(&r, &h).unwrap();
        assert_eq!(counts.edits(), script_cost(&levenshtein_align(&r, &h)));
        // triangle-like bound
        assert!(counts.edits() <= r.len() + h.len());
        assert_eq!(counts.matches + counts.substitutions + counts.deletions, r.len());
        assert_eq!(counts.matches + counts.substitutions + counts.insertions, h.len());
    }
}
