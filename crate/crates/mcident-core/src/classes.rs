//! Communicating classes of a chain's support digraph.
//!
//! A class is essential when no edge leaves it; once entered, the chain stays
//! forever. Two chains share an identical essential class exactly when the
//! spectral radius of their geometric mean is 1, which is why this module and
//! the spectral one get tested against each other.

use crate::matrix::{check_same_n, MatrixError, SquareMatrix, StochasticMatrix};

/// Entrywise tolerance when deciding that two chains agree on the rows of a
/// shared class. Strict enough that only representation noise (e.g. decimal
/// JSON vs computed thirds) passes, far below anything that moves the
/// spectral radius off 1 by more than 1e-12.
const ROW_EQ_TOL: f64 = 1e-12;

/// Partition of the states into strongly connected components of the support
/// digraph, each flagged essential iff it has no outgoing edge.
///
/// Classes are sorted internally and ordered by their smallest state, so the
/// partition of a given matrix is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub struct EssentialClassPartition {
    pub classes: Vec<Vec<usize>>,
    pub essential: Vec<bool>,
}

impl EssentialClassPartition {
    /// The essential classes only.
    pub fn essential_classes(&self) -> impl Iterator<Item = &[usize]> {
        self.classes
            .iter()
            .zip(&self.essential)
            .filter(|(_, &e)| e)
            .map(|(c, _)| c.as_slice())
    }

    pub fn class_of(&self, state: usize) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&state))
    }
}

/// Strongly connected components of {(i,j) : M_ij > 0}, iterative Tarjan.
pub fn essential_classes(m: &StochasticMatrix) -> EssentialClassPartition {
    partition_support(m.as_square())
}

/// SCC partition of an arbitrary nonnegative square matrix's support.
pub fn partition_support(m: &SquareMatrix) -> EssentialClassPartition {
    let n = m.n();
    let sccs = tarjan_sccs(m);

    // Map each state to its class, then flag classes with no outgoing edge.
    let mut class_of = vec![usize::MAX; n];
    for (k, class) in sccs.iter().enumerate() {
        for &s in class {
            class_of[s] = k;
        }
    }
    let mut essential = vec![true; sccs.len()];
    for (i, j) in m.support() {
        if class_of[i] != class_of[j] {
            essential[class_of[i]] = false;
        }
    }

    let mut order: Vec<usize> = (0..sccs.len()).collect();
    let mut classes: Vec<Vec<usize>> = sccs
        .into_iter()
        .map(|mut c| {
            c.sort_unstable();
            c
        })
        .collect();
    order.sort_by_key(|&k| classes[k][0]);
    let essential = order.iter().map(|&k| essential[k]).collect();
    classes.sort_by_key(|c| c[0]);
    EssentialClassPartition { classes, essential }
}

/// Tarjan's algorithm with an explicit stack, so deep chains cannot overflow
/// the call stack.
fn tarjan_sccs(m: &SquareMatrix) -> Vec<Vec<usize>> {
    let n = m.n();
    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::new();
    let mut next_index = 0usize;
    let mut sccs: Vec<Vec<usize>> = Vec::new();

    // Each frame is (vertex, next successor column to examine).
    let mut call: Vec<(usize, usize)> = Vec::new();

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut j)) = call.last_mut() {
            let mut descended = false;
            while *j < n {
                let w = *j;
                *j += 1;
                if m.get(v, w) <= 0.0 {
                    continue;
                }
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                    descended = true;
                    break;
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            }
            if descended {
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                lowlink[parent] = lowlink[parent].min(lowlink[v]);
            }
            if lowlink[v] == index[v] {
                let mut class = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w] = false;
                    class.push(w);
                    if w == v {
                        break;
                    }
                }
                sccs.push(class);
            }
        }
    }
    sccs
}

/// True iff some state set is an essential class of P on which P and Q agree
/// row by row.
///
/// Row agreement on a class C that is essential in P forces C to be closed
/// and strongly connected under Q's support too, so C is automatically an
/// essential class of Q; only the row comparison needs checking.
pub fn has_identical_essential_class(
    p: &StochasticMatrix,
    q: &StochasticMatrix,
) -> Result<bool, MatrixError> {
    check_same_n(p.n(), q.n())?;
    let parts = essential_classes(p);
    'class: for class in parts.essential_classes() {
        for &i in class {
            for j in 0..p.n() {
                if (p.get(i, j) - q.get(i, j)).abs() > ROW_EQ_TOL {
                    continue 'class;
                }
            }
        }
        return Ok(true);
    }
    Ok(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stoch(rows: Vec<Vec<f64>>) -> StochasticMatrix {
        StochasticMatrix::from_rows(rows).unwrap()
    }

    /// Symmetric random walk on the disjoint union of a 4-cycle (states 0..4)
    /// and a triangle (states 4..7).
    pub(crate) fn square_union_triangle() -> StochasticMatrix {
        let mut rows = vec![vec![0.0; 7]; 7];
        for i in 0..4 {
            rows[i][(i + 1) % 4] = 0.5;
            rows[i][(i + 3) % 4] = 0.5;
        }
        for i in 4..7 {
            for j in 4..7 {
                if i != j {
                    rows[i][j] = 0.5;
                }
            }
        }
        stoch(rows)
    }

    #[test]
    fn irreducible_chain_is_one_essential_class() {
        let p = StochasticMatrix::complete_walk(5).unwrap();
        let parts = essential_classes(&p);
        assert_eq!(parts.classes, vec![vec![0, 1, 2, 3, 4]]);
        assert_eq!(parts.essential, vec![true]);
    }

    #[test]
    fn square_and_triangle_are_two_essential_classes() {
        let parts = essential_classes(&square_union_triangle());
        assert_eq!(parts.classes, vec![vec![0, 1, 2, 3], vec![4, 5, 6]]);
        assert_eq!(parts.essential, vec![true, true]);
    }

    #[test]
    fn transient_state_feeding_absorbing_state() {
        // State 0 leaks to the absorbing state 1.
        let p = stoch(vec![vec![0.5, 0.5], vec![0.0, 1.0]]);
        let parts = essential_classes(&p);
        assert_eq!(parts.classes, vec![vec![0], vec![1]]);
        assert_eq!(parts.essential, vec![false, true]);
    }

    #[test]
    fn identical_chains_share_their_class() {
        let p = StochasticMatrix::complete_walk(4).unwrap();
        assert!(has_identical_essential_class(&p, &p).unwrap());
    }

    #[test]
    fn shared_triangle_is_detected() {
        // P: square ∪ triangle. Q: same triangle, but the square replaced by
        // a clique walk on the same four states.
        let p = square_union_triangle();
        let mut rows = vec![vec![0.0; 7]; 7];
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    rows[i][j] = 1.0 / 3.0;
                }
            }
        }
        for i in 4..7 {
            for j in 4..7 {
                if i != j {
                    rows[i][j] = 0.5;
                }
            }
        }
        let q = stoch(rows);
        assert!(has_identical_essential_class(&p, &q).unwrap());
        assert!(has_identical_essential_class(&q, &p).unwrap());
    }

    #[test]
    fn disjoint_oriented_cycles_share_nothing() {
        // Both chains walk a deterministic 4-cycle, visiting the states in
        // different orders, so no row agrees anywhere.
        let mut p_rows = vec![vec![0.0; 4]; 4];
        let mut q_rows = vec![vec![0.0; 4]; 4];
        for i in 0..4 {
            p_rows[i][(i + 1) % 4] = 1.0;
        }
        // Q visits 0 → 2 → 1 → 3 → 0.
        let q_order = [0usize, 2, 1, 3];
        for k in 0..4 {
            q_rows[q_order[k]][q_order[(k + 1) % 4]] = 1.0;
        }
        let p = stoch(p_rows);
        let q = stoch(q_rows);
        assert!(!has_identical_essential_class(&p, &q).unwrap());
    }

    #[test]
    fn long_path_partitions_into_singletons() {
        // Directed path ending in a self-loop: every state its own class,
        // only the loop essential. Also exercises the explicit DFS stack on
        // the deepest support shape a dense matrix can reasonably hold.
        let n = 1_500;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n - 1 {
            rows[i][i + 1] = 1.0;
        }
        rows[n - 1][n - 1] = 1.0;
        let p = stoch(rows);
        let parts = essential_classes(&p);
        assert_eq!(parts.classes.len(), n);
        assert_eq!(parts.essential.iter().filter(|&&e| e).count(), 1);
    }
}
