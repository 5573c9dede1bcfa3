//! Embedding-space analyses: PCA, two-class LDA, exact t-SNE, cosine
//! similarity, cluster-quality scores and the short-utterance overlap
//! diagnostic.

mod cluster;
mod lda;
mod overlap;
mod pca;
mod tsne;

pub use cluster::{
    centroids, cosine_similarity, mutual_nearest_pairs, nearest_centroid_purity, silhouette_score,
    voice_pairing, VoicePairing,
};
pub use lda::{
    lda_fit, lda_fit_languages, lda_predict, stratified_split, LdaConfig, LdaModel, Split,
};
pub use overlap::{overlap_by_length, GroupMetrics, OverlapReport};
pub use pca::{pca_fit, PcaModel};
pub use tsne::{tsne, TsneConfig, TsneResult};

pub(crate) fn common_dim<V: AsRef<[f64]>>(data: &[V]) -> crate::Result<usize> {
    let dim = data.first().map_or(0, |r| r.as_ref().len());
    for r in data {
        crate::embedding::check_dim(dim, r.as_ref().len())?;
    }
    Ok(dim)
}
