use super::table::MappingTable;

#[derive(Clone, Debug, PartialEq)]
pub struct LatticeEdge {
    pub to: usize,
    pub greek: String,
    pub weight: f64,
}

/// Candidate Greek renderings of a Latin string: nodes are character
/// positions `0..=m`, edges carry the Greek text for one input span.
#[derive(Clone, Debug, PartialEq)]
pub struct TransliterationLattice {
    /// Outgoing edges of each node.
    pub edges: Vec<Vec<LatticeEdge>>,
}

impl TransliterationLattice {
    /// Builds the lattice of all table matches.
    ///
    /// Every table entry whose Latin side matches at a position (case
    /// insensitive) contributes an edge, short and long matches alike. A
    /// character gets an identity edge when no single-character entry
    /// matches it or when it is not alphabetic, so digits keep their literal
    /// reading next to any mapped one.
    pub fn build(input: &str, table: &MappingTable) -> Self {
        let chars: Vec<char> = input.chars().collect();
        let lower: Vec<char> = chars.iter().map(|c| c.to_lowercase().next().unwrap_or(*c)).collect();
        let m = chars.len();
        let mut edges: Vec<Vec<LatticeEdge>> = vec![Vec::new(); m + 1];
        for pos in 0..m {
            let mut single = false;
            for entry in table.entries() {
                let latin: Vec<char> = entry.latin.chars().collect();
                let end = pos + latin.len();
                if end <= m && lower[pos..end] == latin[..] {
                    single |= latin.len() == 1;
                    let edge = LatticeEdge {
                        to: end,
                        greek: entry.greek.clone(),
                        weight: entry.weight,
                    };
                    if !edges[pos].contains(&edge) {
                        edges[pos].push(edge);
                    }
                }
            }
            if !single || !chars[pos].is_alphabetic() {
                edges[pos].push(LatticeEdge {
                    to: pos + 1,
                    greek: chars[pos].to_string(),
                    weight: 0.0,
                });
            }
        }
        TransliterationLattice { edges }
    }

    /// Index of the final node.
    pub fn end(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn n_edges(&self) -> usize {
        self.edges.iter().map(Vec::len).sum()
    }

    /// Number of distinct start-to-end paths, saturating.
    pub fn count_paths(&self) -> u128 {
        let m = self.end();
        let mut count = vec![0u128; m + 1];
        count[m] = 1;
        for pos in (0..m).rev() {
            count[pos] = self.edges[pos]
                .iter()
                .fold(0u128, |acc, e| acc.saturating_add(count[e.to]));
        }
        count[0]
    }

    /// All paths as edge sequences. Intended for small lattices.
    pub fn paths(&self) -> Vec<Vec<&LatticeEdge>> {
        fn walk<'a>(
            lat: &'a TransliterationLattice,
            pos: usize,
            prefix: &mut Vec<&'a LatticeEdge>,
            out: &mut Vec<Vec<&'a LatticeEdge>>,
        ) {
            if pos == lat.end() {
                out.push(prefix.clone());
                return;
            }
            for e in &lat.edges[pos] {
                prefix.push(e);
                walk(lat, e.to, prefix, out);
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(self, 0, &mut Vec::new(), &mut out);
        out
    }

    /// True if some path spells `target`.
    pub fn contains(&self, target: &str) -> bool {
        let target: Vec<char> = target.chars().collect();
        // reach[pos] holds the target offsets reachable at node `pos`
        let m = self.end();
        let mut reach = vec![std::collections::BTreeSet::new(); m + 1];
        reach[0].insert(0usize);
        for pos in 0..m {
            let offsets: Vec<usize> = reach[pos].iter().copied().collect();
            for off in offsets {
                for e in &self.edges[pos] {
                    let g: Vec<char> = e.greek.chars().collect();
                    if target[off..].starts_with(&g) {
                        reach[e.to].insert(off + g.len());
                    }
                }
            }
        }
        reach[m].contains(&target.len())
    }
}
