/// Euclidean projection of `z` onto `{p >= 0, sum p = radius}` by the
/// sort-and-threshold method. Returns the projection and its support (the
/// leading entries of the descending order; equal values keep index order).
pub fn project_simplex(z: &[f64], radius: f64) -> (Vec<f64>, Vec<bool>) {
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].total_cmp(&z[a]).then(a.cmp(&b)));
    let mut cumsum = 0.0;
    let mut rho = 0;
    let mut theta_at_rho = 0.0;
    for (j, &idx) in order.iter().enumerate() {
        cumsum += z[idx];
        let theta = (cumsum - radius) / (j + 1) as f64;
        if z[idx] - theta > 0.0 {
            rho = j + 1;
            theta_at_rho = theta;
        }
    }
    let mut support = vec![false; z.len()];
    for &idx in &order[..rho.max(1)] {
        support[idx] = true;
    }
    if rho == 0 {
        // only reachable with radius <= 0 or non-finite input
        theta_at_rho = z[order[0]] - radius;
    }
    let p = z.iter().map(|&v| (v - theta_at_rho).max(0.0)).collect();
    (p, support)
}
