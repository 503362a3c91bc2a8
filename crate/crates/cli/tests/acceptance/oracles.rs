//! Brute-force reference implementations of the robust rules, written
//! independently of the library code paths. Selection logic is re-derived
//! from scratch; only the summation conventions (ascending id, ascending
//! value) are shared, since those are documented output contracts.

/// Squared Euclidean distance.
fn sqdist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn krum_score(entries: &[(usize, Vec<f64>)], me: usize, n_hat: usize) -> f64 {
    let m = entries.len();
    let k = if m - 1 == 0 {
        return 0.0;
    } else {
        let raw = m as isize - n_hat as isize - 2;
        raw.clamp(1, (m - 1) as isize) as usize
    };
    let mut distances: Vec<f64> = entries
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != me)
        .map(|(_, (_, v))| sqdist(&entries[me].1, v))
        .collect();
    distances.sort_by(f64::total_cmp);
    distances[..k].iter().sum()
}

/// Winner id of one Krum round: minimum score, ties to the lowest id.
fn krum_pick(entries: &[(usize, Vec<f64>)], n_hat: usize) -> usize {
    let mut best: Option<(f64, usize)> = None;
    for (pos, (id, _)) in entries.iter().enumerate() {
        let score = krum_score(entries, pos, n_hat);
        let better = match best {
            None => true,
            Some((bs, bi)) => score < bs || (score == bs && *id < bi),
        };
        if better {
            best = Some((score, *id));
        }
    }
    best.expect("non-empty").1
}

/// DKrum: the estimate of the minimum-score neighbor.
pub fn dkrum(entries: &[(usize, Vec<f64>)], n_hat: usize) -> (usize, Vec<f64>) {
    let winner = krum_pick(entries, n_hat);
    let vector = entries.iter().find(|(id, _)| *id == winner).unwrap().1.clone();
    (winner, vector)
}

/// Marginal median per coordinate; even counts average the two middles.
pub fn dmedian(entries: &[(usize, Vec<f64>)]) -> Vec<f64> {
    let dim = entries[0].1.len();
    (0..dim)
        .map(|m| {
            let mut column: Vec<f64> = entries.iter().map(|(_, v)| v[m]).collect();
            column.sort_by(f64::total_cmp);
            let n = column.len();
            if n % 2 == 1 {
                column[n / 2]
            } else {
                (column[n / 2 - 1] + column[n / 2]) / 2.0
            }
        })
        .collect()
}

/// DBulyan: recursive Krum selection of `m - 2 n_hat` entries, then per
/// coordinate the mean of the `beta = m - 4 n_hat` values closest to the
/// median of the selected (ties toward lower value, then lower id; mean
/// summed in ascending id order).
pub fn dbulyan(entries: &[(usize, Vec<f64>)], n_hat: usize) -> Option<(Vec<usize>, Vec<f64>)> {
    let m = entries.len();
    if m < 4 * n_hat + 1 {
        return None;
    }
    let beta = m - 4 * n_hat;
    let mut remaining = entries.to_vec();
    let mut chosen_ids = Vec::new();
    for _ in 0..(m - 2 * n_hat) {
        let winner = krum_pick(&remaining, n_hat);
        chosen_ids.push(winner);
        remaining.retain(|(id, _)| *id != winner);
    }
    chosen_ids.sort_unstable();
    let chosen: Vec<(usize, Vec<f64>)> = chosen_ids
        .iter()
        .map(|id| entries.iter().find(|(i, _)| i == id).unwrap().clone())
        .collect();

    let dim = entries[0].1.len();
    let mut aggregate = Vec::with_capacity(dim);
    for coord in 0..dim {
        let med = {
            let mut col: Vec<f64> = chosen.iter().map(|(_, v)| v[coord]).collect();
            col.sort_by(f64::total_cmp);
            let n = col.len();
            if n % 2 == 1 {
                col[n / 2]
            } else {
                (col[n / 2 - 1] + col[n / 2]) / 2.0
            }
        };
        let mut ranked: Vec<(f64, f64, usize)> = chosen
            .iter()
            .map(|(id, v)| ((v[coord] - med).abs(), v[coord], *id))
            .collect();
        ranked.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut picked: Vec<(usize, f64)> =
            ranked[..beta].iter().map(|&(_, v, id)| (id, v)).collect();
        picked.sort_by_key(|&(id, _)| id);
        aggregate.push(picked.iter().map(|(_, v)| v).sum::<f64>() / beta as f64);
    }
    Some((chosen_ids, aggregate))
}

/// BRIDGE trimmed mean: drop the `n_hat` smallest and largest values per
/// coordinate, mean of the rest (summed in ascending value order).
pub fn bridge(entries: &[(usize, Vec<f64>)], n_hat: usize) -> Option<Vec<f64>> {
    let m = entries.len();
    if m <= 2 * n_hat {
        return None;
    }
    let dim = entries[0].1.len();
    Some(
        (0..dim)
            .map(|coord| {
                let mut column: Vec<f64> = entries.iter().map(|(_, v)| v[coord]).collect();
                column.sort_by(f64::total_cmp);
                let kept = &column[n_hat..m - n_hat];
                kept.iter().sum::<f64>() / kept.len() as f64
            })
            .collect(),
    )
}
