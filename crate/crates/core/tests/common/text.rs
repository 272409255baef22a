//! Surface-form fixtures and a naive longest-match scanner.

use kgalign_core::grounding::SurfaceFormIndex;
use kgalign_core::kg::KnowledgeGraph;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Forms as lowercase token lists; the first entity to claim a form owns it.
pub struct Forms(pub Vec<(usize, Vec<String>)>);

impl Forms {
    pub fn index(&self, case_fold: bool) -> SurfaceFormIndex {
        let mut ix = SurfaceFormIndex::new(case_fold);
        for (e, f) in &self.0 {
            ix.insert(&f.join(" "), *e);
        }
        ix
    }

    /// Owner of an exact (lowercased) token sequence, by linear search.
    pub fn owner(&self, toks: &[String]) -> Option<usize> {
        self.0.iter().find(|(_, f)| f.as_slice() == toks).map(|(e, _)| *e)
    }

    /// Longest form starting at `pos`, trying every length.
    pub fn naive_longest(&self, tokens: &[String], pos: usize) -> Option<(usize, usize)> {
        (1..=tokens.len() - pos)
            .rev()
            .find_map(|len| self.owner(&tokens[pos..pos + len]).map(|e| (e, len)))
    }
}

pub fn lower(tokens: &[String]) -> Vec<String> {
    tokens.iter().map(|t| t.to_lowercase()).collect()
}

/// Entities with nested names: `x`, `x y`, `x y z` style chains plus singletons.
pub fn nested_forms(rng: &mut ChaCha8Rng, n: usize, alphabet: usize) -> Forms {
    let mut forms: Vec<(usize, Vec<String>)> = Vec::new();
    for e in 0..n {
        let f: Vec<String> = if e > 0 && rng.random_bool(0.4) {
            let mut parent = forms[rng.random_range(0..forms.len())].1.clone();
            parent.push(format!("w{}", rng.random_range(0..alphabet)));
            parent
        } else {
            (0..rng.random_range(1..=2)).map(|_| format!("w{}", rng.random_range(0..alphabet))).collect()
        };
        forms.push((e, f));
    }
    Forms(forms)
}

pub fn random_corpus(rng: &mut ChaCha8Rng, forms: &Forms, tokens: usize, alphabet: usize) -> Vec<Vec<String>> {
    let mut docs = Vec::new();
    let mut total = 0;
    while total < tokens {
        let mut doc = Vec::new();
        for _ in 0..rng.random_range(5..40) {
            if rng.random_bool(0.3) {
                let f = &forms.0[rng.random_range(0..forms.0.len())].1;
                doc.extend(f.iter().map(|t| if rng.random_bool(0.3) { t.to_uppercase() } else { t.clone() }));
            } else {
                doc.push(format!("w{}", rng.random_range(0..alphabet + 10)));
            }
        }
        total += doc.len();
        docs.push(doc);
    }
    docs
}

pub fn kg_with(n: usize) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::new("xx");
    for e in 0..n {
        kg.entities.get_or_insert(&format!("e{e}"));
    }
    kg
}
