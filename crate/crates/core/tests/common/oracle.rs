//! Reference implementations used only to check the library.

/// chrF by brute force: every n-gram is materialized as a `String` and
/// clipped matches are counted by scanning, with no hashing.
pub fn chrf(hyp: &str, reference: &str) -> f64 {
    let h: Vec<char> = hyp.chars().filter(|c| !c.is_whitespace()).collect();
    let r: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    assert!(!r.is_empty());
    let grams = |s: &[char], n: usize| -> Vec<String> {
        (0..s.len() + 1 - n).map(|i| s[i..i + n].iter().collect()).collect()
    };
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut k = 0;
    for n in 1..=6 {
        if h.len() < n || r.len() < n {
            continue;
        }
        let hg = grams(&h, n);
        let rg = grams(&r, n);
        let mut seen: Vec<&String> = Vec::new();
        let mut matched = 0usize;
        for g in &hg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let in_h = hg.iter().filter(|x| *x == g).count();
            let in_r = rg.iter().filter(|x| *x == g).count();
            matched += in_h.min(in_r);
        }
        p_sum += matched as f64 / hg.len() as f64;
        r_sum += matched as f64 / rg.len() as f64;
        k += 1;
    }
    if k == 0 {
        return 0.0;
    }
    let p = p_sum / k as f64;
    let r = r_sum / k as f64;
    if p + r == 0.0 {
        return 0.0;
    }
    100.0 * 5.0 * p * r / (4.0 * p + r)
}

/// Pearson r from raw sums:
/// (nΣxy − ΣxΣy) / sqrt((nΣx² − (Σx)²)(nΣy² − (Σy)²)).
pub fn pearson(pairs: &[(f64, f64)]) -> f64 {
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        sx += x;
        sy += y;
        sxy += x * y;
        sxx += x * x;
        syy += y * y;
    }
    (n * sxy - sx * sy) / ((n * sxx - sx * sx) * (n * syy - sy * sy)).sqrt()
}
