use std::collections::HashMap;

/// Dense token ids, most frequent first (ties broken lexicographically).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    token_of_id: Vec<String>,
    counts: Vec<u64>,
    id_of_token: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a>(tokens: impl IntoIterator<Item = &'a str>) -> Vocab {
        let mut counts: HashMap<&str, u64> = HashMap::new();
        for t in tokens {
            *counts.entry(t).or_default() += 1;
        }
        let mut entries: Vec<(&str, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        Vocab::from_parts(
            entries.iter().map(|e| e.0.to_string()).collect(),
            entries.iter().map(|e| e.1).collect(),
        )
    }

    pub fn from_parts(token_of_id: Vec<String>, counts: Vec<u64>) -> Vocab {
        let id_of_token = token_of_id.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab {
            token_of_id,
            counts,
            id_of_token,
        }
    }

    pub fn id(&self, token: &str) -> Option<usize> {
        self.id_of_token.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.token_of_id[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.token_of_id
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.token_of_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.token_of_id.is_empty()
    }
}
