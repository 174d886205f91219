pub mod corpus;
pub mod credibility;
pub mod features;
pub mod model;
pub mod pipeline;
mod http;
pub mod report;
pub mod retrieval;
pub mod similarity;
pub mod study;
pub mod synthetic;

// The guide's examples run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/quickstart.md")]
    mod quickstart {}
    #[doc = include_str!("../../../book/src/configuration.md")]
    mod configuration {}
    #[doc = include_str!("../../../book/src/scoring.md")]
    mod scoring {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/reports.md")]
    mod reports {}
    #[doc = include_str!("../../../book/src/study.md")]
    mod study {}
}
