//! LOBSTER-style message and level-I book files to marked sequences.
//!
//! Event types are `ask` and `bid`. A bid event is a buy market order, a
//! buy limit order at or above the best bid, or a cancellation of a sell
//! limit order at or below the best ask; ask events are the mirror set. The
//! best quotes used for this test are those before the message, i.e. the
//! previous book row. The state attached to an event is read off the book
//! row after the message.

use std::io::Read;

use log::{info, warn};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Dimensions, MarkedSequence};

pub const ASK: usize = 0;
pub const BID: usize = 1;

const NANOS_PER_SEC: i64 = 1_000_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Submission,
    PartialCancel,
    Deletion,
    ExecutionVisible,
    ExecutionHidden,
    Auction,
    Halt,
}

impl MessageType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => Self::Submission,
            2 => Self::PartialCancel,
            3 => Self::Deletion,
            4 => Self::ExecutionVisible,
            5 => Self::ExecutionHidden,
            6 => Self::Auction,
            7 => Self::Halt,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        match self {
            Self::Submission => 1,
            Self::PartialCancel => 2,
            Self::Deletion => 3,
            Self::ExecutionVisible => 4,
            Self::ExecutionHidden => 5,
            Self::Auction => 6,
            Self::Halt => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Buy,
    Sell,
}

impl Direction {
    pub fn sign(self) -> i8 {
        match self {
            Direction::Buy => 1,
            Direction::Sell => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LobMessage {
    /// Nanoseconds since midnight.
    pub time_ns: i64,
    pub msg_type: MessageType,
    pub order_id: u64,
    pub size: u64,
    /// Price times 10^4.
    pub price: i64,
    /// Side of the limit order the message refers to.
    pub direction: Direction,
}

impl LobMessage {
    /// The message as a LOBSTER row, time with nine decimals.
    pub fn to_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            format_time(self.time_ns),
            self.msg_type.code(),
            self.order_id,
            self.size,
            self.price,
            self.direction.sign()
        )
    }
}

/// Formats nanoseconds as seconds with nine decimals.
pub fn format_time(time_ns: i64) -> String {
    format!("{}.{:09}", time_ns / NANOS_PER_SEC, time_ns % NANOS_PER_SEC)
}

/// Parses decimal seconds (at most nine decimals) to integer nanoseconds, exactly.
pub fn parse_time_ns(text: &str) -> std::result::Result<i64, String> {
    let (whole, frac) = text.split_once('.').unwrap_or((text, ""));
    if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad time `{text}`"));
    }
    if !frac.bytes().all(|b| b.is_ascii_digit()) {
        return Err(format!("bad time `{text}`"));
    }
    let digits = frac.trim_end_matches('0');
    if digits.len() > 9 {
        return Err(format!("time `{text}` has more than nanosecond precision"));
    }
    let secs: i64 = whole.parse().map_err(|_| format!("time `{text}` out of range"))?;
    let mut nanos: i64 = 0;
    for (i, b) in digits.bytes().enumerate() {
        nanos += i64::from(b - b'0') * 10i64.pow(8 - i as u32);
    }
    secs.checked_mul(NANOS_PER_SEC)
        .and_then(|s| s.checked_add(nanos))
        .ok_or_else(|| format!("time `{text}` out of range"))
}

/// `HH:MM`, `HH:MM:SS(.fff)` or plain seconds, to nanoseconds since midnight.
pub fn parse_clock(text: &str) -> Result<i64> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::invalid(format!("bad clock time `{text}`"));
    let field = |s: &str| s.parse::<i64>().map_err(|_| bad());
    match parts.as_slice() {
        [secs] => parse_time_ns(secs).map_err(|_| bad()),
        [h, m] => Ok((field(h)? * 3600 + field(m)? * 60) * NANOS_PER_SEC),
        [h, m, s] => Ok((field(h)? * 3600 + field(m)? * 60) * NANOS_PER_SEC + parse_time_ns(s).map_err(|_| bad())?),
        _ => Err(bad()),
    }
}

/// Non-fatal irregularity found while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

fn reader_without_headers<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader)
}

fn field<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, name: &str, line: usize) -> Result<T> {
    record[i].parse::<T>().map_err(|_| Error::Parse {
        line,
        message: format!("{name} `{}` is not valid", &record[i]),
    })
}

/// Parses a headerless message file. Out-of-order timestamps are kept and
/// reported as warnings.
pub fn parse_messages<R: Read>(reader: R) -> Result<(Vec<LobMessage>, Vec<ParseWarning>)> {
    let mut messages = Vec::new();
    let mut warnings = Vec::new();
    for (i, record) in reader_without_headers(reader).records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 6 {
            return Err(Error::Parse {
                line,
                message: format!("expected 6 columns, found {}", record.len()),
            });
        }
        let time_ns = parse_time_ns(&record[0]).map_err(|message| Error::Parse { line, message })?;
        let code: u8 = field(&record, 1, "type", line)?;
        let msg_type = MessageType::from_code(code).ok_or_else(|| Error::Parse {
            line,
            message: format!("message type {code} outside 1..=7"),
        })?;
        let direction = match &record[5] {
            "1" => Direction::Buy,
            "-1" => Direction::Sell,
            d => {
                return Err(Error::Parse {
                    line,
                    message: format!("direction `{d}` must be 1 or -1"),
                })
            }
        };
        let msg = LobMessage {
            time_ns,
            msg_type,
            order_id: field(&record, 2, "order id", line)?,
            size: field(&record, 3, "size", line)?,
            price: field(&record, 4, "price", line)?,
            direction,
        };
        if msg.size == 0 && matches!(msg_type, MessageType::Submission | MessageType::ExecutionVisible) {
            return Err(Error::Parse {
                line,
                message: "submission or execution with zero size".into(),
            });
        }
        if let Some(prev) = messages.last().map(|m: &LobMessage| m.time_ns) {
            if time_ns < prev {
                warnings.push(ParseWarning {
                    line,
                    message: format!("time {} precedes previous {}", format_time(time_ns), format_time(prev)),
                });
            }
        }
        messages.push(msg);
    }
    Ok((messages, warnings))
}

/// Best quotes and their queue sizes. A side with size zero is empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Level1Snapshot {
    pub ask_price: i64,
    pub ask_size: u64,
    pub bid_price: i64,
    pub bid_size: u64,
}

impl Level1Snapshot {
    pub fn has_ask(&self) -> bool {
        self.ask_size > 0
    }

    pub fn has_bid(&self) -> bool {
        self.bid_size > 0
    }
}

/// Parses a headerless `ask_price,ask_size,bid_price,bid_size` file.
pub fn parse_book<R: Read>(reader: R) -> Result<Vec<Level1Snapshot>> {
    let mut rows = Vec::new();
    for (i, record) in reader_without_headers(reader).records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        if record.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 columns, found {}", record.len()),
            });
        }
        let snap = Level1Snapshot {
            ask_price: field(&record, 0, "ask price", line)?,
            ask_size: field(&record, 1, "ask size", line)?,
            bid_price: field(&record, 2, "bid price", line)?,
            bid_size: field(&record, 3, "bid size", line)?,
        };
        if snap.has_ask() && snap.has_bid() && snap.ask_price <= snap.bid_price {
            return Err(Error::Parse {
                line,
                message: format!("ask {} not above bid {}", snap.ask_price, snap.bid_price),
            });
        }
        rows.push(snap);
    }
    Ok(rows)
}

/// A message with the book before and after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BookedMessage {
    pub msg: LobMessage,
    /// `None` for the first row of a file.
    pub pre: Option<Level1Snapshot>,
    pub post: Level1Snapshot,
}

pub fn pair_with_book(messages: &[LobMessage], book: &[Level1Snapshot]) -> Result<Vec<BookedMessage>> {
    if messages.len() != book.len() {
        return Err(Error::invalid(format!(
            "{} messages but {} book rows",
            messages.len(),
            book.len()
        )));
    }
    Ok(messages
        .iter()
        .zip(book)
        .enumerate()
        .map(|(i, (&msg, &post))| BookedMessage {
            msg,
            pre: i.checked_sub(1).map(|j| book[j]),
            post,
        })
        .collect())
}

/// Collapses runs of consecutive visible executions with the same timestamp
/// and direction into one message: sizes are summed, the order id and
/// pre-book come from the first, the post-book from the last.
pub fn aggregate_executions(stream: &[BookedMessage]) -> Vec<BookedMessage> {
    let mut out: Vec<BookedMessage> = Vec::with_capacity(stream.len());
    let mut last_was_execution = false;
    for m in stream {
        let is_execution = m.msg.msg_type == MessageType::ExecutionVisible;
        if let (true, true, Some(prev)) = (is_execution, last_was_execution, out.last_mut()) {
            if prev.msg.time_ns == m.msg.time_ns && prev.msg.direction == m.msg.direction {
                prev.msg.size += m.msg.size;
                prev.post = m.post;
                continue;
            }
        }
        out.push(*m);
        last_was_execution = is_execution;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ClassifiedEvent {
    pub time_ns: i64,
    /// [`ASK`] or [`BID`].
    pub event: usize,
    pub post: Level1Snapshot,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassificationCounts {
    pub kept: usize,
    pub deeper_than_level1: usize,
    pub hidden_executions: usize,
    pub auction_or_halt: usize,
}

/// Keeps level-I messages and labels each `ask` or `bid`. The first message
/// of a file has no pre-message book; its post-message book stands in.
pub fn classify_level1(stream: &[BookedMessage]) -> (Vec<ClassifiedEvent>, ClassificationCounts) {
    let mut counts = ClassificationCounts::default();
    let mut out = Vec::new();
    for m in stream {
        let book = m.pre.unwrap_or(m.post);
        let at_or_inside = |d: Direction| match d {
            Direction::Buy => !book.has_bid() || m.msg.price >= book.bid_price,
            Direction::Sell => !book.has_ask() || m.msg.price <= book.ask_price,
        };
        let event = match m.msg.msg_type {
            MessageType::ExecutionHidden => {
                counts.hidden_executions += 1;
                continue;
            }
            MessageType::Auction | MessageType::Halt => {
                counts.auction_or_halt += 1;
                continue;
            }
            // the direction is the resting order's: a sell order executed is a buy market order
            MessageType::ExecutionVisible => match m.msg.direction {
                Direction::Sell => BID,
                Direction::Buy => ASK,
            },
            MessageType::Submission if at_or_inside(m.msg.direction) => match m.msg.direction {
                Direction::Buy => BID,
                Direction::Sell => ASK,
            },
            MessageType::PartialCancel | MessageType::Deletion if at_or_inside(m.msg.direction) => {
                match m.msg.direction {
                    Direction::Buy => ASK,
                    Direction::Sell => BID,
                }
            }
            _ => {
                counts.deeper_than_level1 += 1;
                continue;
            }
        };
        counts.kept += 1;
        out.push(ClassifiedEvent {
            time_ns: m.msg.time_ns,
            event,
            post: m.post,
        });
    }
    (out, counts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StateVariableSpec {
    /// Spread of one tick, or two or more. `tick` is in price units (x 10^4).
    Spread { tick: i64 },
    /// Five equal-width bins of `(Q_bid - Q_ask) / (Q_bid + Q_ask)`.
    QueueImbalance,
}

pub const SPREAD_LABELS: [&str; 2] = ["1", "2+"];
pub const QI_LABELS: [&str; 5] = ["sell++", "sell+", "neutral", "buy+", "buy++"];

impl StateVariableSpec {
    /// Spread spec for a tick given in currency units, e.g. 0.01.
    pub fn spread_with_tick(tick: f64) -> Result<Self> {
        let units = (tick * 1e4).round();
        if !(units >= 1.0) || ((tick * 1e4) - units).abs() > 1e-6 {
            return Err(Error::invalid(format!("tick {tick} is not a positive multiple of 0.0001")));
        }
        Ok(Self::Spread { tick: units as i64 })
    }

    pub fn labels(&self) -> Vec<String> {
        match self {
            Self::Spread { .. } => SPREAD_LABELS.iter().map(|s| s.to_string()).collect(),
            Self::QueueImbalance => QI_LABELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn dimensions(&self) -> Dimensions {
        Dimensions::new(vec!["ask".into(), "bid".into()], self.labels()).expect("static labels are valid")
    }

    /// `None` when the state is undefined for this book.
    pub fn state(&self, snap: &Level1Snapshot) -> Option<usize> {
        match *self {
            Self::Spread { tick } => spread_state(snap, tick),
            Self::QueueImbalance => qi_state(snap),
        }
    }
}

/// 0 for a one-tick spread, 1 for two ticks or more. Undefined for an
/// empty side or a spread below one tick.
pub fn spread_state(snap: &Level1Snapshot, tick: i64) -> Option<usize> {
    if !snap.has_ask() || !snap.has_bid() {
        return None;
    }
    let spread = snap.ask_price - snap.bid_price;
    match spread.cmp(&tick) {
        std::cmp::Ordering::Less => None,
        std::cmp::Ordering::Equal => Some(0),
        std::cmp::Ordering::Greater => Some(1),
    }
}

/// Bin of the queue imbalance: `[-1,-0.6), [-0.6,-0.2), [-0.2,0.2), [0.2,0.6), [0.6,1]`.
/// Compared exactly in integers. Undefined if either queue is empty.
pub fn qi_state(snap: &Level1Snapshot) -> Option<usize> {
    if !snap.has_ask() || !snap.has_bid() {
        return None;
    }
    let diff = 5 * (i128::from(snap.bid_size) - i128::from(snap.ask_size));
    let total = i128::from(snap.bid_size) + i128::from(snap.ask_size);
    // QI >= k/5  <=>  5 (Qb - Qa) >= k (Qb + Qa)
    Some([-3i128, -1, 1, 3].iter().filter(|&&k| diff >= k * total).count())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct BuildReport {
    pub in_window: usize,
    pub history: usize,
    pub undefined_state: usize,
    pub ties_shifted: usize,
    pub after_window: usize,
}

/// Assembles the sequence on the window `(from, to]` (nanoseconds).
///
/// `initial_book` gives the state at the window start. Events at or before
/// `from` become a history prefix when `keep_history` is set. Timestamps
/// still tied after aggregation keep their input order and are moved
/// forward to one nanosecond after their predecessor.
pub fn build_sequence(
    events: &[ClassifiedEvent],
    spec: &StateVariableSpec,
    from_ns: i64,
    to_ns: i64,
    initial_book: &Level1Snapshot,
    keep_history: bool,
) -> Result<(MarkedSequence, BuildReport)> {
    if from_ns >= to_ns {
        return Err(Error::invalid("session window is empty"));
    }
    let initial_state = spec
        .state(initial_book)
        .ok_or_else(|| Error::invalid("state undefined at window start"))?;
    let mut report = BuildReport::default();
    let (mut times, mut marks, mut states) = (Vec::new(), Vec::new(), Vec::new());
    let mut last_ns: Option<i64> = None;
    for ev in events {
        if ev.time_ns > to_ns {
            report.after_window += 1;
            continue;
        }
        if ev.time_ns <= from_ns && !keep_history {
            continue;
        }
        let Some(x) = spec.state(&ev.post) else {
            report.undefined_state += 1;
            continue;
        };
        let mut t = ev.time_ns;
        if let Some(prev) = last_ns {
            if t <= prev {
                t = prev + 1;
                report.ties_shifted += 1;
            }
        }
        if t > to_ns {
            report.after_window += 1;
            continue;
        }
        last_ns = Some(t);
        if t <= from_ns {
            report.history += 1;
        } else {
            report.in_window += 1;
        }
        times.push(t as f64 / NANOS_PER_SEC as f64);
        marks.push(ev.event);
        states.push(x);
    }
    if report.ties_shifted > 0 {
        warn!("{} tied timestamps shifted by 1 ns to preserve input order", report.ties_shifted);
    }
    if report.undefined_state > 0 {
        info!("{} events skipped with undefined state", report.undefined_state);
    }
    let seq = MarkedSequence::new(
        times,
        marks,
        states,
        initial_state,
        from_ns as f64 / NANOS_PER_SEC as f64,
        to_ns as f64 / NANOS_PER_SEC as f64,
    )?;
    Ok((seq, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub messages: usize,
    pub warnings: Vec<ParseWarning>,
    pub aggregated: usize,
    pub classification: ClassificationCounts,
    pub build: BuildReport,
}

/// Full pipeline from file contents to a sequence on `(from, to]`.
///
/// The window-start state comes from the last book row at or before `from`,
/// or the first row if the file starts later.
pub fn ingest<M: Read, B: Read>(
    messages: M,
    book: B,
    spec: &StateVariableSpec,
    from_ns: i64,
    to_ns: i64,
    keep_history: bool,
) -> Result<(MarkedSequence, Dimensions, IngestReport)> {
    let (msgs, warnings) = parse_messages(messages)?;
    for w in &warnings {
        warn!("line {}: {}", w.line, w.message);
    }
    let rows = parse_book(book)?;
    let booked = pair_with_book(&msgs, &rows)?;
    let initial_book = booked
        .iter()
        .take_while(|m| m.msg.time_ns <= from_ns)
        .last()
        .or(booked.first())
        .map(|m| m.post)
        .ok_or_else(|| Error::invalid("message file is empty"))?;
    let aggregated = aggregate_executions(&booked);
    let (classified, classification) = classify_level1(&aggregated);
    let (seq, build) = build_sequence(&classified, spec, from_ns, to_ns, &initial_book, keep_history)?;
    let report = IngestReport {
        messages: msgs.len(),
        warnings,
        aggregated: booked.len() - aggregated.len(),
        classification,
        build,
    };
    Ok((seq, spec.dimensions(), report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn snap(ask_price: i64, ask_size: u64, bid_price: i64, bid_size: u64) -> Level1Snapshot {
        Level1Snapshot {
            ask_price,
            ask_size,
            bid_price,
            bid_size,
        }
    }

    fn msg(time_ns: i64, code: u8, price: i64, direction: Direction) -> LobMessage {
        LobMessage {
            time_ns,
            msg_type: MessageType::from_code(code).unwrap(),
            order_id: 1,
            size: 100,
            price,
            direction,
        }
    }

    #[test]
    fn parses_a_submission_row() {
        let (m, w) = parse_messages("34200.123456789,1,12345,100,505000,1\n".as_bytes()).unwrap();
        assert!(w.is_empty());
        assert_eq!(
            m[0],
            LobMessage {
                time_ns: 34_200_123_456_789,
                msg_type: MessageType::Submission,
                order_id: 12345,
                size: 100,
                price: 505000,
                direction: Direction::Buy,
            }
        );
        assert_eq!(m[0].to_row(), "34200.123456789,1,12345,100,505000,1");
    }

    #[test]
    fn bad_rows_are_parse_errors() {
        let err = parse_messages("34200.1,1,1,100,505000,1\n34200.2,1,1,100,505000,0\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_messages("34200.1,8,1,100,505000,1\n".as_bytes()).is_err());
        assert!(parse_messages("34200.1,1,1,100\n".as_bytes()).is_err());
        assert!(parse_messages("34200.1234567891,1,1,100,5,1\n".as_bytes()).is_err());
    }

    #[test]
    fn out_of_order_time_is_a_warning() {
        let (_, w) = parse_messages("2.0,1,1,1,5,1\n1.0,1,1,1,5,1\n".as_bytes()).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].line, 2);
    }

    #[test]
    fn time_parsing_is_exact() {
        assert_eq!(parse_time_ns("1.5").unwrap(), 1_500_000_000);
        assert_eq!(parse_time_ns("43200").unwrap(), 43_200 * NANOS_PER_SEC);
        assert_eq!(parse_time_ns("0.000000001").unwrap(), 1);
        assert_eq!(parse_time_ns("0.1000000000").unwrap(), 100_000_000);
        assert_eq!(parse_clock("12:00").unwrap(), 43_200 * NANOS_PER_SEC);
        assert_eq!(parse_clock("14:30:00.5").unwrap(), 52_200 * NANOS_PER_SEC + 500_000_000);
        assert!(parse_clock("noon").is_err());
    }

    #[test]
    fn execution_aggregation() {
        let b = snap(101, 100, 100, 100);
        let booked = |m: LobMessage| BookedMessage {
            msg: m,
            pre: Some(b),
            post: b,
        };
        let tied = [booked(msg(5, 4, 101, Direction::Sell)), booked(msg(5, 4, 101, Direction::Sell))];
        let out = aggregate_executions(&tied);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].msg.size, 200);
        let apart = [booked(msg(5, 4, 101, Direction::Sell)), booked(msg(6, 4, 101, Direction::Sell))];
        assert_eq!(aggregate_executions(&apart).len(), 2);
        let mixed = [booked(msg(5, 4, 101, Direction::Sell)), booked(msg(5, 4, 100, Direction::Buy))];
        assert_eq!(aggregate_executions(&mixed).len(), 2);
    }

    #[test]
    fn level1_classification() {
        let pre = snap(101, 100, 100, 100);
        let booked = |m: LobMessage| BookedMessage {
            msg: m,
            pre: Some(pre),
            post: pre,
        };
        let stream = [
            booked(msg(1, 1, 100, Direction::Buy)),  // buy limit at bid
            booked(msg(2, 3, 101, Direction::Sell)), // sell deletion at ask
            booked(msg(3, 1, 98, Direction::Buy)),   // two ticks below bid
            booked(msg(4, 4, 101, Direction::Sell)), // buy market order
            booked(msg(5, 1, 101, Direction::Sell)), // sell limit at ask
            booked(msg(6, 2, 100, Direction::Buy)),  // buy cancel at bid
            booked(msg(7, 5, 101, Direction::Sell)),
            booked(msg(8, 7, 0, Direction::Buy)),
        ];
        let (ev, counts) = classify_level1(&stream);
        let kinds: Vec<usize> = ev.iter().map(|e| e.event).collect();
        assert_eq!(kinds, vec![BID, BID, BID, ASK, ASK]);
        assert_eq!(counts.deeper_than_level1, 1);
        assert_eq!(counts.hidden_executions, 1);
        assert_eq!(counts.auction_or_halt, 1);
    }

    #[test]
    fn state_bins() {
        assert_eq!(qi_state(&snap(101, 100, 100, 300)), Some(3));
        // QI = (120 - 80) / 200 = 0.2 exactly
        assert_eq!(qi_state(&snap(101, 80, 100, 120)), Some(3));
        // -0.2 opens the neutral bin
        assert_eq!(qi_state(&snap(101, 120, 100, 80)), Some(2));
        assert_eq!(qi_state(&snap(101, 1, 100, 1000)), Some(4));
        assert_eq!(qi_state(&snap(101, 1000, 100, 1)), Some(0));
        assert_eq!(qi_state(&snap(101, 0, 100, 10)), None);
        assert_eq!(spread_state(&snap(10300, 1, 10000, 1), 100), Some(1));
        assert_eq!(spread_state(&snap(10100, 1, 10000, 1), 100), Some(0));
        assert_eq!(spread_state(&snap(10100, 0, 10000, 1), 100), None);
        assert_eq!(StateVariableSpec::spread_with_tick(0.01).unwrap(), StateVariableSpec::Spread { tick: 100 });
    }

    #[test]
    fn assembly() {
        let post = snap(10100, 5, 10000, 5);
        let spec = StateVariableSpec::Spread { tick: 100 };
        let from = 43_200 * NANOS_PER_SEC;
        let to = 52_200 * NANOS_PER_SEC;
        let (empty, _) = build_sequence(&[], &spec, from, to, &post, false).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.initial_state, 0);
        let one = [ClassifiedEvent {
            time_ns: 43_201 * NANOS_PER_SEC,
            event: BID,
            post,
        }];
        let (seq, _) = build_sequence(&one, &spec, from, to, &post, false).unwrap();
        assert_eq!((seq.times[0], seq.events[0], seq.states[0]), (43201.0, BID, 0));
    }

    #[test]
    fn residual_ties_keep_input_order() {
        let post = snap(10100, 5, 10000, 5);
        let ev = |event| ClassifiedEvent {
            time_ns: 10,
            event,
            post,
        };
        let (seq, rep) = build_sequence(&[ev(BID), ev(ASK)], &StateVariableSpec::QueueImbalance, 0, 100, &post, false).unwrap();
        assert_eq!(seq.events, vec![BID, ASK]);
        assert_eq!(rep.ties_shifted, 1);
        assert!(seq.times[1] > seq.times[0]);
    }
}
