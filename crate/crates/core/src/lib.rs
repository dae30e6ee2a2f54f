//! In-storage genomic read filtering.
//!
//! Two filters decide which reads must leave the storage device for full
//! read mapping: [`emfilter`] removes reads that occur verbatim in the
//! reference, [`nmfilter`] removes reads that will not align at all. The
//! [`ssdmodel`] and [`pipeline`] modules estimate the time, traffic and
//! energy of running them inside an SSD next to a host read mapper.

pub mod seqio;
pub mod index;
pub mod emfilter;
pub mod nmfilter;
pub mod refkit;
pub mod ssdmodel;
pub mod synth;
pub mod pipeline;
pub mod cli;
