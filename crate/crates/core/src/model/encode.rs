use super::SideInput;
use crate::corpus::{build_query_text, DocumentRecord, QueryRecord, ScenarioConfig};
use crate::error::Result;
use crate::store::EmbeddingStore;

/// Turns corpus records into network inputs for one scenario.
///
/// Query contextual vectors are read at positions of the tweet ++ OCR
/// sequence, so SC1 inputs use a prefix of the SC2 rows.
#[derive(Debug, Clone, Copy)]
pub struct Encoder<'a> {
    pub store: &'a EmbeddingStore,
    pub scenario: ScenarioConfig,
}

impl<'a> Encoder<'a> {
    pub fn new(store: &'a EmbeddingStore, scenario: ScenarioConfig) -> Self {
        Encoder { store, scenario }
    }

    fn side(&self, id: &str, tokens: &[&str], image_ids: &[String]) -> Result<SideInput> {
        let mut static_rows = Vec::with_capacity(tokens.len() * self.store.static_words.dim());
        let mut ctx_rows = Vec::with_capacity(tokens.len() * self.store.contextual.dim());
        for (pos, tok) in tokens.iter().enumerate() {
            static_rows.extend(self.store.static_words.lookup(tok).iter().map(|&x| x as f64));
            ctx_rows.extend(
                self.store
                    .lookup_contextual(id, pos)?
                    .iter()
                    .map(|&x| x as f64),
            );
        }
        let mut image_rows = Vec::with_capacity(image_ids.len() * self.store.visual.dim());
        for img in image_ids {
            image_rows.extend(self.store.visual.lookup(img)?.iter().map(|&x| x as f64));
        }
        Ok(SideInput {
            id: id.to_string(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            static_rows,
            ctx_rows,
            image_ids: image_ids.to_vec(),
            image_rows,
        })
    }

    pub fn query(&self, q: &QueryRecord) -> Result<SideInput> {
        let tokens = build_query_text(q, &self.scenario);
        self.side(&q.id, &tokens, &q.image_ids)
    }

    pub fn doc(&self, d: &DocumentRecord) -> Result<SideInput> {
        let tokens: Vec<&str> = d
            .doc_tokens
            .iter()
            .take(self.scenario.max_doc_len)
            .map(String::as_str)
            .collect();
        self.side(&d.id, &tokens, &d.image_ids)
    }
}
