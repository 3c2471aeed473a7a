//! Downstream evaluations of learned embeddings.

mod community;
mod link;
mod metrics;
mod probe;

pub use community::{ari, clustering_accuracy, community_detect, nmi, COMMUNITY_RESTARTS};
pub use link::{
    average_precision, link_logit, link_metrics, link_predict, link_score, make_link_split, roc_auc, LinkSplit,
    TEST_FRAC, VAL_FRAC,
};
pub use metrics::{mean_std, Metrics};
pub use probe::{class_index, node_classify, probe_accuracy, LogisticProbe, ProbeConfig};
