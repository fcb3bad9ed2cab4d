use std::cmp::Ordering;
use std::collections::HashMap;

use super::lattice::TransliterationLattice;
use super::lm::{CharNgramLM, BOUNDARY};

#[derive(Clone, Debug)]
struct Hypothesis {
    score: f64,
    text: String,
    context: Vec<u32>,
}

/// Higher score first, then lexicographically smaller text.
fn better(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.text.cmp(&b.text))
}

/// Best path through the lattice under `Σ edge weight + λ · log P_LM(text)`.
///
/// Beam search left to right over lattice nodes; hypotheses that reach a
/// node with the same LM context are merged and the `beam_width` best are
/// kept per node. Returns the text and its score.
pub fn decode_lattice(
    lattice: &TransliterationLattice,
    lm: &CharNgramLM,
    lm_weight: f64,
    beam_width: usize,
) -> (String, f64) {
    let m = lattice.end();
    let mut beams: Vec<HashMap<Vec<u32>, Hypothesis>> = vec![HashMap::new(); m + 1];
    beams[0].insert(
        lm.start_context(),
        Hypothesis {
            score: 0.0,
            text: String::new(),
            context: lm.start_context(),
        },
    );
    for pos in 0..m {
        let mut hyps: Vec<Hypothesis> = std::mem::take(&mut beams[pos]).into_values().collect();
        hyps.sort_by(better);
        hyps.truncate(beam_width);
        for hyp in &hyps {
            for edge in &lattice.edges[pos] {
                let mut next = hyp.clone();
                next.score += edge.weight;
                for c in edge.greek.chars() {
                    let id = lm.id(c);
                    next.score += lm_weight * lm.log_prob(&next.context, id);
                    lm.advance(&mut next.context, id);
                }
                next.text.push_str(&edge.greek);
                let slot = &mut beams[edge.to];
                match slot.get(&next.context) {
                    Some(old) if better(old, &next) != Ordering::Greater => {}
                    _ => {
                        slot.insert(next.context.clone(), next);
                    }
                }
            }
        }
    }
    let mut finals: Vec<Hypothesis> = std::mem::take(&mut beams[m])
        .into_values()
        .map(|mut h| {
            h.score += lm_weight * lm.log_prob(&h.context, BOUNDARY);
            h
        })
        .collect();
    finals.sort_by(better);
    finals.into_iter().next().map(|h| (h.text, h.score)).unwrap_or_default()
}
