//! Brute-force metric reference. Every count comes from enumerating start
//! positions and comparing slices element by element; LCS is a memoized
//! recursion over suffix pairs.

use std::collections::HashMap;

pub type Doc = Vec<String>;

fn gram_at(doc: &[String], start: usize, n: usize) -> &[String] {
    &doc[start..start + n]
}

fn gram_starts(doc: &[String], n: usize) -> usize {
    if doc.len() >= n {
        doc.len() - n + 1
    } else {
        0
    }
}

/// Occurrences of `gram` in `doc`.
fn occurrences(doc: &[String], gram: &[String]) -> usize {
    let n = gram.len();
    (0..gram_starts(doc, n))
        .filter(|&s| gram_at(doc, s, n) == gram)
        .count()
}

/// Distinct n-grams of `doc`, in first-seen order.
fn types(doc: &[String], n: usize) -> Vec<&[String]> {
    let mut seen: Vec<&[String]> = Vec::new();
    for s in 0..gram_starts(doc, n) {
        let g = gram_at(doc, s, n);
        if !seen.contains(&g) {
            seen.push(g);
        }
    }
    seen
}

pub fn bleu(cands: &[Doc], refs: &[Doc], max_n: usize) -> f64 {
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let mut matched = 0usize;
        let mut total = 0usize;
        for (c, r) in cands.iter().zip(refs) {
            for g in types(c, n) {
                matched += occurrences(c, g).min(occurrences(r, g));
            }
            total += gram_starts(c, n);
        }
        if matched == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (matched as f64 / total as f64).ln();
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    100.0 * bp * (log_sum / max_n as f64).exp()
}

pub fn lcs(a: &[String], b: &[String]) -> usize {
    fn go(a: &[String], b: &[String], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == a.len() || j == b.len() {
            return 0;
        }
        if let Some(v) = memo.get(&(i, j)) {
            return *v;
        }
        let v = if a[i] == b[j] {
            1 + go(a, b, i + 1, j + 1, memo)
        } else {
            go(a, b, i + 1, j, memo).max(go(a, b, i, j + 1, memo))
        };
        memo.insert((i, j), v);
        v
    }
    go(a, b, 0, 0, &mut HashMap::new())
}

pub fn rouge_l(cands: &[Doc], refs: &[Doc]) -> f64 {
    let fs: Vec<f64> = cands
        .iter()
        .zip(refs)
        .map(|(c, r)| {
            let l = lcs(c, r) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let p = l / c.len() as f64;
            let rc = l / r.len() as f64;
            2.0 * p * rc / (p + rc)
        })
        .collect();
    100.0 * fs.iter().sum::<f64>() / fs.len() as f64
}

/// `None` when no document has `n` tokens.
pub fn distinct(docs: &[Doc], n: usize) -> Option<f64> {
    let vals: Vec<f64> = docs
        .iter()
        .filter(|d| d.len() >= n)
        .map(|d| types(d, n).len() as f64 / gram_starts(d, n) as f64)
        .collect();
    (!vals.is_empty()).then(|| 100.0 * vals.iter().sum::<f64>() / vals.len() as f64)
}

pub fn repetition(docs: &[Doc], n: usize) -> Option<f64> {
    let vals: Vec<f64> = docs
        .iter()
        .filter(|d| d.len() >= n)
        .map(|d| {
            let ts = types(d, n);
            let repeated = ts.iter().filter(|g| occurrences(d, g) >= 2).count();
            repeated as f64 / ts.len() as f64
        })
        .collect();
    (!vals.is_empty()).then(|| 100.0 * vals.iter().sum::<f64>() / vals.len() as f64)
}
