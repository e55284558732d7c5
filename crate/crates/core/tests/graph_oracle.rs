use gqla_core::gf2::BitMatrix;
use gqla_core::graph::{Node, TannerGraph};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Shortest simple cycle through `root` by exhaustive depth-limited search.
fn brute_force_girth(adj: &[Vec<usize>], root: usize) -> Option<usize> {
    fn walk(adj: &[Vec<usize>], root: usize, at: usize, len: usize, target: usize, used: &mut [bool]) -> bool {
        for &w in &adj[at] {
            if w == root && len + 1 == target && len >= 2 {
                return true;
            }
            if !used[w] && w != root && len + 1 < target {
                used[w] = true;
                let found = walk(adj, root, w, len + 1, target, used);
                used[w] = false;
                if found {
                    return true;
                }
            }
        }
        false
    }
    let mut used = vec![false; adj.len()];
    (3..=adj.len()).find(|&l| walk(adj, root, root, 0, l, &mut used))
}

fn adjacency(h: &BitMatrix) -> Vec<Vec<usize>> {
    let (m, n) = (h.rows(), h.cols());
    let mut adj = vec![Vec::new(); n + m];
    for c in 0..m {
        for v in 0..n {
            if h.get(c, v) {
                adj[v].push(n + c);
                adj[n + c].push(v);
            }
        }
    }
    adj
}

fn check(h: &BitMatrix) {
    let g = TannerGraph::from_matrix(h);
    let adj = adjacency(h);
    let n = h.cols();
    for v in 0..n {
        assert_eq!(g.node_girth(Node::Var(v)), brute_force_girth(&adj, v), "variable {v} of {h:?}");
    }
    for c in 0..h.rows() {
        assert_eq!(g.node_girth(Node::Check(c)), brute_force_girth(&adj, n + c), "check {c} of {h:?}");
    }
}

#[test]
fn matches_exhaustive_search_on_random_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let n = rng.random_range(2..=12);
        let m = rng.random_range(1..=12);
        let p = rng.random_range(0.1..0.6);
        let bits: Vec<u8> = (0..m * n).map(|_| rng.random_bool(p) as u8).collect();
        check(&BitMatrix::from_bits(m, n, &bits));
    }
}

#[test]
fn complete_bipartite_and_cycle_graphs() {
    check(&BitMatrix::from_bits(2, 2, &[1, 1, 1, 1]));
    // 2L-cycle: check c joins variables c and c+1 (mod L)
    for l in 2..=10 {
        let mut h = BitMatrix::zeros(l, l);
        for c in 0..l {
            h.set(c, c, true);
            h.set(c, (c + 1) % l, true);
        }
        let g = TannerGraph::from_matrix(&h);
        assert_eq!(g.girth(), Some(2 * l));
        check(&h);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Up to 24 nodes.
    #[test]
    fn matches_exhaustive_search(m in 1usize..=10, n in 2usize..=14, bits in proptest::collection::vec(0u8..2, 140)) {
        let h = BitMatrix::from_bits(m, n, &bits[..m * n]);
        check(&h);
    }
}
