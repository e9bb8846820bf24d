/// Ladder membership written out independently of the library: the level
/// sets with branch 1 and 2, enumerated up to `levels`.
pub fn brute_force_ladder(d: usize, alpha: f64, s: f64, levels: u32) -> Vec<(u32, u8)> {
    let c = (d as f64 + 2.0) / 4.0;
    let sigma = |n: u32| (2f64.powi(n as i32) - 2.0) / (2f64.powi(n as i32) - 1.0);
    let eta = |n: u32| 2f64.powi(n as i32 + 1) - 2.0;
    let low = -alpha + (1.0 - alpha).max(0.0);
    let gap = alpha - c;
    let mut hits = Vec::new();
    for n in 1..=levels {
        if alpha > sigma(n) * c && alpha <= sigma(n + 1) * c && s > low && s < eta(n - 1) * gap {
            hits.push((n, 1));
        }
        if alpha > sigma(n + 1) * c && alpha < c && s >= eta(n) * gap && s < eta(n - 1) * gap {
            hits.push((n, 2));
        }
    }
    hits
}
