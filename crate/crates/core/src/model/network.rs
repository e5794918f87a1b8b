use chrono::NaiveDate;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{DayAttentionOver, Hyper, ModelError, Result, Variant, INDICATOR_COUNT};
use crate::corpus::{Charset, Direction, EncodedTitle, WindowSample};
use crate::layers::{
    attention_over_attention, bilstm_encode, dense_softmax, embed_word, multi_hop_attention, multi_hop_attention_split,
    AttentionParams, CharCnnParams, DenseParams, EmbeddingTable, LstmParams,
};
use crate::tensor::{ParamId, ParamStore, Tape, Tensor, Var};

/// Turns one title into its `2u` vector.
#[derive(Debug, Clone, PartialEq)]
pub enum TitleEncoder {
    /// Word-level Bi-LSTM, multi-hop attention and hop reducer.
    Attentive {
        fwd: LstmParams,
        bwd: LstmParams,
        attention: AttentionParams,
    },
    /// Mean of the word inputs followed by an affine map.
    Bag { projection: DenseParams },
}

/// Collapses a day's title vectors into one `2u` vector.
#[derive(Debug, Clone, PartialEq)]
pub enum NewsAggregator {
    Attentive {
        attention: AttentionParams,
    },
    /// Convolution banks over the title sequence, max-pooled, then
    /// `tanh(W·pooled + b)`.
    Conv {
        banks: Vec<(usize, ParamId, ParamId)>,
        projection: DenseParams,
    },
}

/// Parameter wiring of one variant. Holds ids only; values live in the
/// [`ParamStore`] of the owning [`AtLstmModel`].
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub variant: Variant,
    pub hyper: Hyper,
    pub vocab_size: usize,
    pub charset_size: usize,
    pub embedding: EmbeddingTable,
    pub chars: Option<CharCnnParams>,
    pub title: TitleEncoder,
    pub news: NewsAggregator,
    /// Stand-in day vector for days without news.
    pub no_news: ParamId,
    pub day_fwd: LstmParams,
    pub day_bwd: LstmParams,
    pub day_attention: AttentionParams,
    pub head: DenseParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AtLstmModel {
    pub params: ParamStore,
    pub net: Network,
}

/// Tape handles of one forward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `[p_up, p_down]`.
    pub probs: Var,
    /// Per day, per title: word-level annotation matrix `[r × tokens]`.
    pub word_attention: Vec<Vec<Option<Var>>>,
    /// Per day: news-level annotation matrix `[r × titles]`, absent on
    /// empty days and for the convolutional aggregator.
    pub news_attention: Vec<Option<Var>>,
    /// Day-level annotation matrix `[r × N]`.
    pub day_attention: Var,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DayTrace {
    pub date: NaiveDate,
    pub words: Vec<Option<Vec<Vec<f64>>>>,
    pub news: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionTrace {
    pub days: Vec<DayTrace>,
    pub day: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub p_up: f64,
    pub p_down: f64,
    pub direction: Direction,
}

impl Prediction {
    /// Ties go to down.
    pub fn from_probs(p: &[f64]) -> Self {
        let direction = if p[0] > p[1] { Direction::Up } else { Direction::Down };
        Self {
            p_up: p[0],
            p_down: p[1],
            direction,
        }
    }
}

fn matrix_rows(tape: &Tape<'_>, v: Var) -> Vec<Vec<f64>> {
    let cols = tape.shape(v)[1];
    tape.value(v).chunks(cols).map(<[f64]>::to_vec).collect()
}

/// Builds `tag` with parameters drawn from a generator seeded by `seed`.
/// Identical arguments give bit-identical parameters.
pub fn build_variant(
    tag: Variant,
    hyper: &Hyper,
    vocab_size: usize,
    charset_size: usize,
    seed: u64,
) -> Result<AtLstmModel> {
    hyper.validate()?;
    if vocab_size < 2 || (tag.uses_char_cnn() && charset_size < 2) {
        return Err(ModelError::InvalidHyper(format!(
            "vocabulary ({vocab_size}) and charset ({charset_size}) must include the reserved ids"
        )));
    }
    let std = hyper.init_std;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let s = &mut store;
    let two_u = 2 * hyper.u;
    let two_v = 2 * hyper.v;

    let embedding = EmbeddingTable::new(s, "word.embedding", vocab_size, hyper.word_dim, std, &mut rng)?;
    let chars = if tag.uses_char_cnn() {
        Some(CharCnnParams::new(
            s,
            "word.chars",
            charset_size,
            hyper.char_dim,
            &hyper.filter_widths,
            hyper.maps_per_filter,
            Charset::PAD,
            std,
            &mut rng,
        )?)
    } else {
        None
    };
    let word_in = hyper.word_dim + chars.as_ref().map_or(0, CharCnnParams::output_dim);

    let title = match tag {
        Variant::BagAtLstm => TitleEncoder::Bag {
            projection: DenseParams::new(s, "word.bag", word_in, two_u, std, &mut rng)?,
        },
        _ => TitleEncoder::Attentive {
            fwd: LstmParams::new(s, "word.lstm_fwd", word_in, hyper.u, std, &mut rng)?,
            bwd: LstmParams::new(s, "word.lstm_bwd", word_in, hyper.u, std, &mut rng)?,
            attention: AttentionParams::new(s, "word.attention", two_u, hyper.d_a, hyper.r, std, &mut rng)?,
        },
    };

    let news = match tag {
        Variant::CnnLstm => {
            let maps = hyper.cnn_lstm_maps;
            let banks = hyper
                .filter_widths
                .iter()
                .map(|&w| {
                    let f = s.add(
                        format!("news.conv.w{w}"),
                        Tensor::randn(&[w, two_u, maps], std, &mut rng),
                    )?;
                    let b = s.add(format!("news.conv.b{w}"), Tensor::zeros(&[maps]))?;
                    Ok((w, f, b))
                })
                .collect::<Result<Vec<_>>>()?;
            let pooled = banks.len() * maps;
            NewsAggregator::Conv {
                banks,
                projection: DenseParams::new(s, "news.conv.projection", pooled, two_u, std, &mut rng)?,
            }
        }
        _ => NewsAggregator::Attentive {
            attention: AttentionParams::new(s, "news.attention", two_u, hyper.d_a, hyper.r, std, &mut rng)?,
        },
    };

    let no_news = s.add("day.no_news", Tensor::randn(&[two_u], std, &mut rng))?;
    let day_fwd = LstmParams::new(s, "day.lstm_fwd", two_u, hyper.v, std, &mut rng)?;
    let day_bwd = LstmParams::new(s, "day.lstm_bwd", two_u, hyper.v, std, &mut rng)?;
    let day_attention = AttentionParams::with_output(
        s,
        "day.attention",
        two_v,
        hyper.window_out(),
        hyper.d_a,
        hyper.r,
        std,
        &mut rng,
    )?;
    let head_in = hyper.window_out() + if tag.uses_technical() { INDICATOR_COUNT } else { 0 };
    let head = DenseParams::new(s, "output", head_in, 2, std, &mut rng)?;

    let net = Network {
        variant: tag,
        hyper: hyper.clone(),
        vocab_size,
        charset_size,
        embedding,
        chars,
        title,
        news,
        no_news,
        day_fwd,
        day_bwd,
        day_attention,
        head,
    };
    net.check_widths()?;
    Ok(AtLstmModel { params: store, net })
}

fn junction(name: &'static str, produced: usize, consumed: usize) -> Result<()> {
    if produced == consumed {
        Ok(())
    } else {
        Err(ModelError::WidthChain {
            junction: name,
            produced,
            consumed,
        })
    }
}

impl Network {
    /// Width of a word input `e_i`.
    pub fn word_input_dim(&self) -> usize {
        self.embedding.dim + self.chars.as_ref().map_or(0, CharCnnParams::output_dim)
    }

    pub fn title_dim(&self) -> usize {
        2 * self.hyper.u
    }

    /// Verifies that each stage consumes exactly what the previous one emits.
    pub fn check_widths(&self) -> Result<()> {
        let e = self.word_input_dim();
        let two_u = self.title_dim();
        match &self.title {
            TitleEncoder::Attentive { fwd, bwd, attention } => {
                junction("word input -> word Bi-LSTM", e, fwd.input)?;
                junction("word input -> word Bi-LSTM (backward)", e, bwd.input)?;
                junction(
                    "word Bi-LSTM -> word attention",
                    fwd.hidden + bwd.hidden,
                    attention.d_in,
                )?;
                junction("word attention -> title vector", attention.d_out, two_u)?;
            }
            TitleEncoder::Bag { projection } => {
                junction("word input -> bag projection", e, projection.input)?;
                junction("bag projection -> title vector", projection.output, two_u)?;
            }
        }
        match &self.news {
            NewsAggregator::Attentive { attention } => {
                junction("title vector -> news attention", two_u, attention.d_in)?;
                junction("news attention -> day vector", attention.d_out, two_u)?;
            }
            NewsAggregator::Conv { banks, projection } => {
                junction(
                    "pooled maps -> news projection",
                    banks.len() * self.hyper.cnn_lstm_maps,
                    projection.input,
                )?;
                junction("news projection -> day vector", projection.output, two_u)?;
            }
        }
        junction("day vector -> day Bi-LSTM", two_u, self.day_fwd.input)?;
        junction("day vector -> day Bi-LSTM (backward)", two_u, self.day_bwd.input)?;
        junction(
            "day Bi-LSTM -> day attention",
            self.day_fwd.hidden + self.day_bwd.hidden,
            self.day_attention.d_in,
        )?;
        let pooled = match self.hyper.day_attention_over {
            DayAttentionOver::D => two_u,
            DayAttentionOver::H => self.day_fwd.hidden + self.day_bwd.hidden,
        };
        junction("day attention values", pooled, self.day_attention.d_out)?;
        let extra = if self.variant.uses_technical() {
            INDICATOR_COUNT
        } else {
            0
        };
        junction(
            "window vector -> output",
            self.day_attention.d_out + extra,
            self.head.input,
        )?;
        junction("output classes", self.head.output, 2)
    }

    /// `N_i`: the title vector, plus the word-level annotation matrix when
    /// the encoder is attentive.
    pub fn encode_title(&self, tape: &mut Tape<'_>, title: &EncodedTitle) -> Result<(Var, Option<Var>)> {
        if title.is_empty() {
            return Err(ModelError::EmptyTitle);
        }
        if title.char_ids.len() != title.token_ids.len() {
            return Err(ModelError::MalformedSample(
                "title token and character lists differ in length".into(),
            ));
        }
        let inputs = title
            .token_ids
            .iter()
            .zip(&title.char_ids)
            .map(|(&id, chars)| embed_word(tape, &self.embedding, self.chars.as_ref(), id, chars))
            .collect::<crate::tensor::Result<Vec<_>>>()?;
        match &self.title {
            TitleEncoder::Attentive { fwd, bwd, attention } => {
                let h = bilstm_encode(tape, fwd, bwd, &inputs)?;
                let mask = vec![true; inputs.len()];
                let (m, a) = multi_hop_attention(tape, attention, h, &mask)?;
                Ok((attention_over_attention(tape, attention, m)?, Some(a)))
            }
            TitleEncoder::Bag { projection } => {
                let stacked = tape.stack_rows(&inputs)?;
                let n = inputs.len();
                let avg = tape.constant(Tensor::filled(&[1, n], 1.0 / n as f64))?;
                let mean = tape.matmul(avg, stacked)?;
                let mean = tape.reshape(mean, &[self.word_input_dim()])?;
                Ok((projection.affine(tape, mean)?, None))
            }
        }
    }

    /// `D_t` from a day's title vectors, plus the news-level annotation
    /// matrix when the aggregator is attentive. Needs at least one title.
    pub fn aggregate_news(&self, tape: &mut Tape<'_>, titles: &[Var]) -> Result<(Var, Option<Var>)> {
        if titles.is_empty() {
            return Err(ModelError::MalformedSample(
                "aggregate_news needs at least one title".into(),
            ));
        }
        let stacked = tape.stack_rows(titles)?;
        match &self.news {
            NewsAggregator::Attentive { attention } => {
                let mask = vec![true; titles.len()];
                let (m, a) = multi_hop_attention(tape, attention, stacked, &mask)?;
                Ok((attention_over_attention(tape, attention, m)?, Some(a)))
            }
            NewsAggregator::Conv { banks, projection } => {
                let widest = banks.iter().map(|b| b.0).max().unwrap_or(1);
                let seq = if titles.len() < widest {
                    let pad = tape.constant(Tensor::zeros(&[widest - titles.len(), self.title_dim()]))?;
                    tape.concat(&[stacked, pad], 0)?
                } else {
                    stacked
                };
                let pooled = banks
                    .iter()
                    .map(|&(_, f, b)| {
                        let f = tape.param(f);
                        let b = tape.param(b);
                        let conv = tape.conv1d_valid(seq, f, b)?;
                        let act = tape.tanh(conv)?;
                        tape.max_pool_time(act)
                    })
                    .collect::<crate::tensor::Result<Vec<_>>>()?;
                let pooled = tape.concat(&pooled, 0)?;
                let z = projection.affine(tape, pooled)?;
                Ok((tape.tanh(z)?, None))
            }
        }
    }

    /// `D_t` for one day: the no-news vector when `titles` is empty.
    /// Also returns the news-level and per-title word-level annotations.
    pub fn encode_day(
        &self,
        tape: &mut Tape<'_>,
        titles: &[EncodedTitle],
    ) -> Result<(Var, Option<Var>, Vec<Option<Var>>)> {
        if titles.is_empty() {
            return Ok((tape.param(self.no_news), None, Vec::new()));
        }
        let mut vectors = Vec::with_capacity(titles.len());
        let mut words = Vec::with_capacity(titles.len());
        for t in titles {
            let (v, a) = self.encode_title(tape, t)?;
            vectors.push(v);
            words.push(a);
        }
        let (d, a) = self.aggregate_news(tape, &vectors)?;
        Ok((d, a, words))
    }

    /// `V` from the `N` day vectors, plus the day-level annotation matrix.
    pub fn encode_window(&self, tape: &mut Tape<'_>, days: &[Var]) -> Result<(Var, Var)> {
        if days.len() != self.hyper.window {
            return Err(ModelError::WindowLength {
                expected: self.hyper.window,
                got: days.len(),
            });
        }
        let h = bilstm_encode(tape, &self.day_fwd, &self.day_bwd, days)?;
        let values = match self.hyper.day_attention_over {
            DayAttentionOver::D => tape.stack_rows(days)?,
            DayAttentionOver::H => h,
        };
        let mask = vec![true; days.len()];
        let (m, a) = multi_hop_attention_split(tape, &self.day_attention, h, values, &mask)?;
        Ok((attention_over_attention(tape, &self.day_attention, m)?, a))
    }

    /// Applies the output layer to `V`, appending indicators for the
    /// technical variant.
    pub fn head(&self, tape: &mut Tape<'_>, v: Var, sample: &WindowSample) -> Result<Var> {
        let input = if self.variant.uses_technical() {
            let tech = sample
                .technical
                .as_ref()
                .ok_or_else(|| ModelError::MissingTechnical(sample.target_date.to_string()))?;
            if tech.len() != INDICATOR_COUNT {
                return Err(ModelError::MalformedSample(format!(
                    "expected {INDICATOR_COUNT} technical indicators, got {}",
                    tech.len()
                )));
            }
            let tech = tape.constant(Tensor::vector(tech.clone()))?;
            tape.concat(&[v, tech], 0)?
        } else {
            v
        };
        Ok(dense_softmax(tape, &self.head, input)?)
    }

    /// Full forward pass for one sample.
    pub fn forward(&self, tape: &mut Tape<'_>, sample: &WindowSample) -> Result<Forward> {
        if sample.days.len() != self.hyper.window {
            return Err(ModelError::WindowLength {
                expected: self.hyper.window,
                got: sample.days.len(),
            });
        }
        let mut days = Vec::with_capacity(sample.days.len());
        let mut word_attention = Vec::with_capacity(sample.days.len());
        let mut news_attention = Vec::with_capacity(sample.days.len());
        for slot in &sample.days {
            self.check_ids(&slot.titles)?;
            let (d, news, words) = self.encode_day(tape, &slot.titles)?;
            days.push(d);
            news_attention.push(news);
            word_attention.push(words);
        }
        let (v, day_attention) = self.encode_window(tape, &days)?;
        let probs = self.head(tape, v, sample)?;
        Ok(Forward {
            probs,
            word_attention,
            news_attention,
            day_attention,
        })
    }

    /// Cross-entropy loss of one sample against its label.
    pub fn loss(&self, tape: &mut Tape<'_>, sample: &WindowSample) -> Result<Var> {
        let f = self.forward(tape, sample)?;
        Ok(tape.cross_entropy(f.probs, sample.label.one_hot())?)
    }

    fn check_ids(&self, titles: &[EncodedTitle]) -> Result<()> {
        for t in titles {
            if let Some(&id) = t.token_ids.iter().find(|&&id| id as usize >= self.vocab_size) {
                return Err(ModelError::MalformedSample(format!(
                    "token id {id} out of range for vocabulary of {}",
                    self.vocab_size
                )));
            }
            if self.chars.is_some() {
                let bad = t.char_ids.iter().flatten().find(|&&c| c as usize >= self.charset_size);
                if let Some(&c) = bad {
                    return Err(ModelError::MalformedSample(format!(
                        "char id {c} out of range for charset of {}",
                        self.charset_size
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn predict(&self, params: &ParamStore, sample: &WindowSample) -> Result<Prediction> {
        let mut tape = Tape::new(params);
        let f = self.forward(&mut tape, sample)?;
        Ok(Prediction::from_probs(tape.value(f.probs)))
    }

    /// Prediction plus every annotation matrix of the pass.
    pub fn predict_traced(&self, params: &ParamStore, sample: &WindowSample) -> Result<(Prediction, AttentionTrace)> {
        let mut tape = Tape::new(params);
        let f = self.forward(&mut tape, sample)?;
        let days = sample
            .days
            .iter()
            .zip(&f.word_attention)
            .zip(&f.news_attention)
            .map(|((slot, words), news)| DayTrace {
                date: slot.date,
                words: words.iter().map(|a| a.map(|a| matrix_rows(&tape, a))).collect(),
                news: news.map(|a| matrix_rows(&tape, a)),
            })
            .collect();
        let trace = AttentionTrace {
            days,
            day: matrix_rows(&tape, f.day_attention),
        };
        Ok((Prediction::from_probs(tape.value(f.probs)), trace))
    }
}

impl AtLstmModel {
    pub fn variant(&self) -> Variant {
        self.net.variant
    }

    pub fn hyper(&self) -> &Hyper {
        &self.net.hyper
    }

    pub fn param_count(&self) -> usize {
        self.params.num_trainable_scalars()
    }

    pub fn predict(&self, sample: &WindowSample) -> Result<Prediction> {
        self.net.predict(&self.params, sample)
    }

    pub fn predict_traced(&self, sample: &WindowSample) -> Result<(Prediction, AttentionTrace)> {
        self.net.predict_traced(&self.params, sample)
    }

    /// Overwrites the word table with pre-trained vectors.
    pub fn load_embeddings(&mut self, vectors: &Tensor) -> Result<()> {
        Ok(self.net.embedding.load(&mut self.params, vectors)?)
    }
}
