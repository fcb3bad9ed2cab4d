//! Maximum spanning arborescence decoding (Chu-Liu/Edmonds).

use super::ArcScores;

/// Heads forming the highest-scoring tree rooted at node 0.
///
/// Ties between candidate arcs go to the lowest head index.
pub fn decode_mst(scores: &ArcScores) -> Vec<usize> {
    let n = scores.len();
    let mut w = vec![vec![f64::NEG_INFINITY; n + 1]; n + 1];
    for dep in 1..=n {
        for head in 0..=n {
            if head != dep {
                w[head][dep] = scores.get(dep, head);
            }
        }
    }
    let parent = arborescence(&w);
    parent[1..].to_vec()
}

/// `w[u][v]` is the weight of arc `u → v`; node 0 is the root. Returns the
/// parent of every node (`parent[0]` is unused).
fn arborescence(w: &[Vec<f64>]) -> Vec<usize> {
    let size = w.len();
    let best_in: Vec<usize> = (0..size)
        .map(|v| {
            if v == 0 {
                return 0;
            }
            let mut best = usize::MAX;
            for u in 0..size {
                if u != v && (best == usize::MAX || w[u][v] > w[best][v]) {
                    best = u;
                }
            }
            best
        })
        .collect();

    let Some(cycle) = find_cycle(&best_in) else {
        return best_in;
    };
    let in_cycle: Vec<bool> = (0..size).map(|v| cycle.contains(&v)).collect();

    // Contract the cycle into one node placed last.
    let outside: Vec<usize> = (0..size).filter(|&v| !in_cycle[v]).collect();
    let c = outside.len();
    let mut cw = vec![vec![f64::NEG_INFINITY; c + 1]; c + 1];
    let mut enter = vec![0; c];
    let mut exit = vec![0; c];
    for (a, &u) in outside.iter().enumerate() {
        for (b, &v) in outside.iter().enumerate() {
            if a != b {
                cw[a][b] = w[u][v];
            }
        }
        let mut best = f64::NEG_INFINITY;
        let mut best_v = usize::MAX;
        for &v in &cycle {
            let gain = w[u][v] - w[best_in[v]][v];
            if best_v == usize::MAX || gain > best || (gain == best && v < best_v) {
                best = gain;
                best_v = v;
            }
        }
        cw[a][c] = best;
        enter[a] = best_v;

        let mut best = f64::NEG_INFINITY;
        let mut best_u = usize::MAX;
        for &x in &cycle {
            if best_u == usize::MAX || w[x][u] > best || (w[x][u] == best && x < best_u) {
                best = w[x][u];
                best_u = x;
            }
        }
        cw[c][a] = best;
        exit[a] = best_u;
    }

    let sub = arborescence(&cw);
    let mut parent = best_in;
    for (a, &v) in outside.iter().enumerate() {
        if v == 0 {
            continue;
        }
        parent[v] = if sub[a] == c { exit[a] } else { outside[sub[a]] };
    }
    let from = sub[c];
    parent[enter[from]] = outside[from];
    parent
}

/// Nodes of some cycle in the parent graph, if any.
fn find_cycle(parent: &[usize]) -> Option<Vec<usize>> {
    let size = parent.len();
    let mut state = vec![0u8; size];
    for start in 1..size {
        let mut path = Vec::new();
        let mut v = start;
        while v != 0 && state[v] == 0 {
            state[v] = 1;
            path.push(v);
            v = parent[v];
        }
        if v != 0 && state[v] == 1 {
            let pos = path.iter().position(|&x| x == v).unwrap();
            let mut cycle = path[pos..].to_vec();
            cycle.sort_unstable();
            return Some(cycle);
        }
        for x in path {
            state[x] = 2;
        }
    }
    None
}

/// True if `heads` (1-based words, 0 = root) form a tree rooted at 0.
pub fn is_tree(heads: &[usize]) -> bool {
    let n = heads.len();
    if heads.iter().enumerate().any(|(i, &h)| h > n || h == i + 1) {
        return false;
    }
    (1..=n).all(|start| {
        let mut v = start;
        for _ in 0..=n {
            if v == 0 {
                return true;
            }
            v = heads[v - 1];
        }
        false
    })
}

/// Total arc score of a head assignment, summed in word order.
pub fn tree_score(scores: &ArcScores, heads: &[usize]) -> f64 {
    heads.iter().enumerate().map(|(i, &h)| scores.get(i + 1, h)).sum()
}
