//! Two-threshold semantic corpus filter.
//!
//! A document is kept when its embedding is close enough to the positive
//! keyword centroid and far enough from the negative one.

use crate::error::EngineError;

use super::embed::{cosine, Embedder};
use super::{Document, KeywordProfile};

/// Cosine thresholds for the keep decision. Defaults: positive similarity
/// must exceed 0.2 and negative similarity must stay below 0.1.
#[derive(Debug, Clone, Copy)]
pub struct FilterThresholds {
    pub positive_min: f64,
    pub negative_max: f64,
    /// How much of the body participates in the embedded text, in chars.
    pub body_prefix_chars: usize,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self {
            positive_min: 0.2,
            negative_max: 0.1,
            body_prefix_chars: 2000,
        }
    }
}

/// Normalized mean of the individual keyword embeddings.
pub fn keyword_centroid(
    embedder: &dyn Embedder,
    keywords: &[String],
) -> Result<Vec<f64>, EngineError> {
    if keywords.is_empty() {
        return Err(EngineError::domain("keyword list must be non-empty"));
    }
    let mut sum: Option<Vec<f64>> = None;
    for kw in keywords {
        let v = embedder.embed(kw)?;
        match &mut sum {
            None => sum = Some(v),
            Some(acc) => {
                for (a, x) in acc.iter_mut().zip(&v) {
                    *a += x;
                }
            }
        }
    }
    let mut centroid = sum.unwrap();
    let norm = centroid.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(EngineError::domain("keyword centroid has zero norm"));
    }
    for x in centroid.iter_mut() {
        *x /= norm;
    }
    Ok(centroid)
}

/// Text a document is judged on: title plus a bounded body prefix.
pub fn filter_text(doc: &Document, thresholds: &FilterThresholds) -> String {
    let prefix: String = doc.body.chars().take(thresholds.body_prefix_chars).collect();
    if doc.title.is_empty() {
        prefix
    } else {
        format!("{} {}", doc.title, prefix)
    }
}

/// Keep decision for one document.
pub fn keep_document(
    doc: &Document,
    profile: &KeywordProfile,
    embedder: &dyn Embedder,
    thresholds: &FilterThresholds,
) -> Result<bool, EngineError> {
    profile.validate()?;
    doc.validate()?;
    let pos = keyword_centroid(embedder, &profile.positive)?;
    let neg = keyword_centroid(embedder, &profile.negative)?;
    let v = embedder.embed(&filter_text(doc, thresholds))?;
    Ok(cosine(&v, &pos) > thresholds.positive_min && cosine(&v, &neg) < thresholds.negative_max)
}

/// Filter a corpus, preserving input order and stamping each document's
/// `kept` flag. Returns the kept documents.
pub fn filter_corpus(
    docs: &mut [Document],
    profile: &KeywordProfile,
    embedder: &dyn Embedder,
    thresholds: &FilterThresholds,
) -> Result<Vec<Document>, EngineError> {
    profile.validate()?;
    let pos = keyword_centroid(embedder, &profile.positive)?;
    let neg = keyword_centroid(embedder, &profile.negative)?;
    let mut kept = Vec::new();
    for doc in docs.iter_mut() {
        doc.validate()?;
        let v = embedder.embed(&filter_text(doc, thresholds))?;
        let keep = cosine(&v, &pos) > thresholds.positive_min
            && cosine(&v, &neg) < thresholds.negative_max;
        doc.kept = Some(keep);
        if keep {
            kept.push(doc.clone());
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::embed::HashEmbedder;

    fn profile() -> KeywordProfile {
        KeywordProfile {
            positive: vec!["genomics".into(), "catalysis".into()],
            negative: vec!["cosmetics".into(), "nutrition".into()],
        }
    }

    #[test]
    fn positive_selfmatch_is_kept() {
        let doc = Document::new("d1", "", "genomics catalysis");
        let kept = keep_document(
            &doc,
            &profile(),
            &HashEmbedder,
            &FilterThresholds::default(),
        )
        .unwrap();
        assert!(kept, "cos_pos = 1 > 0.2 and cos_neg = 0 < 0.1");
    }

    #[test]
    fn negative_selfmatch_is_rejected() {
        let doc = Document::new("d2", "", "cosmetics nutrition");
        let kept = keep_document(
            &doc,
            &profile(),
            &HashEmbedder,
            &FilterThresholds::default(),
        )
        .unwrap();
        assert!(!kept, "cos_neg = 1 >= 0.1");
    }

    #[test]
    fn low_positive_similarity_is_rejected() {
        // Mostly off-profile tokens drive cos_pos below the threshold;
        // verified against an independent cosine computation.
        let body = "genomics xaa xbb xcc xdd xee xff xgg xhh xii xjj xkk xll \
                    xmm xnn xoo xpp xqq xrr xss xtt xuu xvv xww xxy xyz xzz \
                    yaa ybb ycc ydd yee yff ygg yhh yii yjj ykk yll ymm ynn";
        let doc = Document::new("d3", "", body);
        let thresholds = FilterThresholds::default();
        let embedder = HashEmbedder;
        let v = embedder.embed(&filter_text(&doc, &thresholds)).unwrap();
        let pos = keyword_centroid(&embedder, &profile().positive).unwrap();
        let cos_pos: f64 = v.iter().zip(&pos).map(|(a, b)| a * b).sum();
        assert!(cos_pos < 0.2, "construction check failed: cos_pos={cos_pos}");
        assert!(!keep_document(&doc, &profile(), &embedder, &thresholds).unwrap());
    }

    #[test]
    fn filter_preserves_order_and_sets_flags() {
        let mut docs = vec![
            Document::new("a", "", "genomics catalysis"),
            Document::new("b", "", "cosmetics nutrition"),
            Document::new("c", "", "catalysis genomics catalysis"),
            Document::new("d", "", "nutrition cosmetics nutrition"),
        ];
        let kept = filter_corpus(
            &mut docs,
            &profile(),
            &HashEmbedder,
            &FilterThresholds::default(),
        )
        .unwrap();
        let ids: Vec<&str> = kept.iter().map(|d| d.id.as_str()).collect();
        assert_eq!(ids, vec!["a", "c"]);
        assert_eq!(docs[0].kept, Some(true));
        assert_eq!(docs[1].kept, Some(false));
        assert_eq!(docs[2].kept, Some(true));
        assert_eq!(docs[3].kept, Some(false));
    }

    #[test]
    fn empty_corpus_filters_to_empty() {
        let mut docs: Vec<Document> = vec![];
        let kept = filter_corpus(
            &mut docs,
            &profile(),
            &HashEmbedder,
            &FilterThresholds::default(),
        )
        .unwrap();
        assert!(kept.is_empty());
    }
}
