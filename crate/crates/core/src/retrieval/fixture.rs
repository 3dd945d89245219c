use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::rank::RelevanceTable;
use crate::corpus::{Corpus, FeatureSequence, GroundTruth, SynthGenerator, SynthSpec};
use crate::error::{Error, Result};
use crate::labels::TokenLabelSequence;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StdFixtureSpec {
    pub corpus: SynthSpec,
    pub num_queries: usize,
    /// True tokens per query.
    pub query_tokens: usize,
    /// Documents that embed each query.
    pub relevant_per_query: usize,
}

impl Default for StdFixtureSpec {
    fn default() -> Self {
        StdFixtureSpec { corpus: SynthSpec::default(), num_queries: 1, query_tokens: 3, relevant_per_query: 3 }
    }
}

/// Synthetic search collection with known relevance.
#[derive(Debug, Clone, PartialEq)]
pub struct StdFixture {
    pub documents: Corpus,
    pub truth: GroundTruth,
    pub queries: Vec<FeatureSequence>,
    pub query_truth: Vec<TokenLabelSequence>,
    /// A document is relevant to a query iff its true token sequence contains
    /// the query's token sequence contiguously.
    pub relevance: RelevanceTable,
}

fn contains(hay: &[usize], needle: &[usize]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

const MAX_ATTEMPTS: usize = 10_000;

/// Random tokens around `query`, with no two equal neighbors.
fn splice(generator: &mut SynthGenerator, len: usize, query: &[usize]) -> Result<Vec<usize>> {
    let len = len.max(query.len());
    let extra = len - query.len();
    let before = generator.choose_indices(extra + 1, 1)[0];
    let mut out: Vec<usize> = Vec::with_capacity(len);
    for i in 0..before {
        let mut avoid: Vec<usize> = out.last().copied().into_iter().collect();
        if i + 1 == before {
            avoid.push(query[0]);
        }
        out.push(generator.sample_token(&avoid)?);
    }
    out.extend_from_slice(query);
    while out.len() < len {
        let prev = *out.last().expect("query is non-empty");
        out.push(generator.sample_token(&[prev])?);
    }
    Ok(out)
}

/// Documents `utt0000..`, queries `q000..`. Each query is embedded in exactly
/// `relevant_per_query` documents; no other document contains it.
pub fn synthesize_std_fixture(spec: &StdFixtureSpec, seed: u64) -> Result<StdFixture> {
    let docs = spec.corpus.num_utterances;
    let hosts_needed = spec.num_queries * spec.relevant_per_query;
    if spec.num_queries == 0 || spec.query_tokens == 0 {
        return Err(Error::Config("fixture needs at least one query of at least one token".into()));
    }
    if hosts_needed > docs {
        return Err(Error::Config(format!("{hosts_needed} host documents requested from {docs}")));
    }
    if spec.corpus.num_tokens < 3 {
        return Err(Error::Config("fixture needs at least three true tokens".into()));
    }
    let mut generator = SynthGenerator::new(spec.corpus.clone(), seed)?;

    let mut query_seqs: Vec<Vec<usize>> = Vec::with_capacity(spec.num_queries);
    let mut attempts = 0;
    while query_seqs.len() < spec.num_queries {
        let q = generator.sample_tokens(spec.query_tokens);
        if !query_seqs.contains(&q) {
            query_seqs.push(q);
        }
        attempts += 1;
        if attempts > MAX_ATTEMPTS {
            return Err(Error::Config("cannot draw distinct queries".into()));
        }
    }
    let mut host_of = vec![None; docs];
    for (k, d) in generator.choose_indices(docs, hosts_needed).into_iter().enumerate() {
        host_of[d] = Some(k / spec.relevant_per_query);
    }

    let mut utterances = Vec::with_capacity(docs);
    let mut truth = Vec::with_capacity(docs);
    let mut speakers = BTreeMap::new();
    for (i, host) in host_of.iter().enumerate() {
        let len = generator.sample_utterance_length();
        let mut attempts = 0;
        let tokens = loop {
            let tokens = match host {
                Some(q) => splice(&mut generator, len, &query_seqs[*q])?,
                None => generator.sample_tokens(len),
            };
            if query_seqs.iter().enumerate().all(|(j, q)| contains(&tokens, q) == (*host == Some(j))) {
                break tokens;
            }
            attempts += 1;
            if attempts > MAX_ATTEMPTS {
                return Err(Error::Config("cannot draw documents avoiding the queries".into()));
            }
        };
        let id = format!("utt{i:04}");
        let (f, t) = generator.render(&id, &tokens)?;
        speakers.insert(id, format!("spk{:02}", i % spec.corpus.num_speakers));
        utterances.push(f);
        truth.push(t);
    }

    let mut queries = Vec::with_capacity(spec.num_queries);
    let mut query_truth = Vec::with_capacity(spec.num_queries);
    for (j, q) in query_seqs.iter().enumerate() {
        let (f, t) = generator.render(&format!("q{j:03}"), q)?;
        queries.push(f);
        query_truth.push(t);
    }

    let mut relevance = RelevanceTable::default();
    for (q, qt) in query_seqs.iter().zip(&query_truth) {
        for t in &truth {
            relevance.insert(qt.utterance_id.clone(), t.utterance_id.clone(), contains(&t.token_ids(), q));
        }
    }
    Ok(StdFixture {
        documents: Corpus::new(utterances)?.with_speakers(speakers),
        truth: GroundTruth { num_tokens: spec.corpus.num_tokens, utterances: truth },
        queries,
        query_truth,
        relevance,
    })
}
