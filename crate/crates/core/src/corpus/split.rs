use chrono::NaiveDate;

use super::{CorpusError, Result, WindowSample};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Splits {
    pub train: Vec<WindowSample>,
    pub dev: Vec<WindowSample>,
    pub test: Vec<WindowSample>,
}

/// Chronological partition by target date: `[.., dev_start)` trains,
/// `[dev_start, test_start)` is dev, `[test_start, ..)` is test.
pub fn split_by_date(samples: Vec<WindowSample>, dev_start: NaiveDate, test_start: NaiveDate) -> Result<Splits> {
    if dev_start >= test_start {
        return Err(CorpusError::InvertedSplit {
            dev: dev_start,
            test: test_start,
        });
    }
    let mut out = Splits::default();
    for s in samples {
        if s.target_date < dev_start {
            out.train.push(s);
        } else if s.target_date < test_start {
            out.dev.push(s);
        } else {
            out.test.push(s);
        }
    }
    Ok(out)
}
