//! Building blocks for sentence-extractive question answering corpora:
//! record types, ingestion, question generation, agreement-based gold
//! construction, aligned translation, prompted extraction and evaluation.

pub mod agreement;
pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod ingestion;
pub mod llm;
pub mod question_gen;
pub mod template;
pub mod translation;
