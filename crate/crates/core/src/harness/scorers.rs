//! Scorers over a loaded dataset: ReLU of the hidden value, constants, and
//! an external subprocess speaking line-delimited JSON.
//!
//! The subprocess protocol is one request line per batch on its stdin,
//! `{"ids": [...], "payloads": [...]}` where each payload is the dataset
//! record, and one response line on its stdout, `{"scores": [...]}`.

use std::collections::HashMap;
use std::fmt;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::synthetic::Record;
use crate::plugin::{PluginError, ScorerPlugin};
use crate::topk::ElementId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub ids: Vec<ElementId>,
    pub payloads: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub scores: Vec<f64>,
}

/// Which scorer to use, as given on the command line.
#[derive(Debug, Clone, PartialEq)]
pub enum ScorerKind {
    /// `max(0, value)`.
    Relu,
    Constant(f64),
    /// Returns 0 without looking at the element.
    Noop,
    /// Shell command of a long-lived scorer process.
    External(String),
}

impl FromStr for ScorerKind {
    type Err = String;

    /// `relu`, `noop`, `constant` or `constant:<v>` are built in; anything
    /// else is run as a shell command.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "" => Err("empty scorer".into()),
            "relu" => Ok(ScorerKind::Relu),
            "noop" => Ok(ScorerKind::Noop),
            "constant" => Ok(ScorerKind::Constant(1.0)),
            lower => match lower.strip_prefix("constant:") {
                Some(v) => v
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .map(ScorerKind::Constant)
                    .ok_or_else(|| format!("bad constant score in {s}")),
                None => Ok(ScorerKind::External(t.to_string())),
            },
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScorerKind::Relu => f.write_str("relu"),
            ScorerKind::Constant(v) => write!(f, "constant:{v}"),
            ScorerKind::Noop => f.write_str("noop"),
            ScorerKind::External(cmd) => write!(f, "external:{cmd}"),
        }
    }
}

/// Client side of the subprocess protocol.
pub struct ExternalScorer {
    command: String,
    child: Child,
    stdin: Option<BufWriter<ChildStdin>>,
    stdout: BufReader<ChildStdout>,
    line: String,
}

impl ExternalScorer {
    /// Starts `command` through `sh -c`. The process lives until this value
    /// is dropped.
    pub fn spawn(command: &str) -> Result<Self, PluginError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(ExternalScorer {
            command: command.to_string(),
            child,
            stdin: Some(BufWriter::new(stdin)),
            stdout: BufReader::new(stdout),
            line: String::new(),
        })
    }

    pub fn command(&self) -> &str {
        &self.command
    }

    pub fn request(
        &mut self,
        ids: &[ElementId],
        payloads: &[Value],
    ) -> Result<Vec<f64>, PluginError> {
        let request = ScoreRequest {
            ids: ids.to_vec(),
            payloads: payloads.to_vec(),
        };
        let stdin = self.stdin.as_mut().expect("stdin open until drop");
        let sent = serde_json::to_writer(&mut *stdin, &request)
            .map_err(io::Error::from)
            .and_then(|_| stdin.write_all(b"\n"))
            .and_then(|_| stdin.flush());
        if let Err(e) = sent {
            return Err(self.exited(&format!("write failed: {e}")));
        }
        self.line.clear();
        if self.stdout.read_line(&mut self.line)? == 0 {
            return Err(self.exited("no response"));
        }
        let response: ScoreResponse = serde_json::from_str(self.line.trim()).map_err(|e| {
            PluginError::Protocol(format!("malformed response {:?}: {e}", self.line.trim()))
        })?;
        if response.scores.len() != ids.len() {
            return Err(PluginError::LengthMismatch {
                expected: ids.len(),
                got: response.scores.len(),
            });
        }
        if let Some((position, &value)) = response
            .scores
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.is_finite() && **s >= 0.0))
        {
            return Err(PluginError::InvalidScore { position, value });
        }
        Ok(response.scores)
    }

    fn exited(&mut self, what: &str) -> PluginError {
        let status = match self.child.try_wait() {
            Ok(Some(status)) => format!("exited with {status}"),
            _ => "still running".to_string(),
        };
        PluginError::Protocol(format!("scorer `{}`: {what} ({status})", self.command))
    }
}

impl Drop for ExternalScorer {
    fn drop(&mut self) {
        // closing stdin is the shutdown signal
        drop(self.stdin.take());
        if !matches!(self.child.try_wait(), Ok(Some(_))) {
            std::thread::sleep(std::time::Duration::from_millis(20));
            if !matches!(self.child.try_wait(), Ok(Some(_))) {
                let _ = self.child.kill();
            }
        }
        let _ = self.child.wait();
    }
}

/// Server side of the protocol: answers requests from `input` until it
/// closes.
pub fn serve<R, W, F>(input: R, output: W, mut score: F) -> io::Result<()>
where
    R: BufRead,
    W: Write,
    F: FnMut(&[ElementId], &[Value]) -> Vec<f64>,
{
    let mut output = BufWriter::new(output);
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: ScoreRequest = serde_json::from_str(&line)?;
        let scores = score(&request.ids, &request.payloads);
        serde_json::to_writer(&mut output, &ScoreResponse { scores })?;
        output.write_all(b"\n")?;
        output.flush()?;
    }
    Ok(())
}

enum Backend {
    Relu,
    Constant(f64),
    Noop,
    External(ExternalScorer),
}

/// Scorer plugin over dataset records; elements are record positions.
pub struct DatasetScorer<'a> {
    records: &'a [Record],
    lookup: HashMap<&'a ElementId, usize>,
    backend: Backend,
    kind: ScorerKind,
}

impl<'a> DatasetScorer<'a> {
    pub fn new(records: &'a [Record], kind: ScorerKind) -> Result<Self, PluginError> {
        let backend = match &kind {
            ScorerKind::Relu => {
                if let Some(r) = records.iter().find(|r| r.value.is_none()) {
                    return Err(PluginError::Failed(format!(
                        "relu scorer needs a value on every record; {} has none",
                        r.id
                    )));
                }
                Backend::Relu
            }
            ScorerKind::Constant(v) => Backend::Constant(*v),
            ScorerKind::Noop => Backend::Noop,
            ScorerKind::External(cmd) => Backend::External(ExternalScorer::spawn(cmd)?),
        };
        Ok(DatasetScorer {
            records,
            lookup: records
                .iter()
                .enumerate()
                .map(|(i, r)| (&r.id, i))
                .collect(),
            backend,
            kind,
        })
    }

    pub fn kind(&self) -> &ScorerKind {
        &self.kind
    }
}

impl ScorerPlugin for DatasetScorer<'_> {
    type Element = usize;

    fn fetch_batch(&mut self, ids: &[ElementId]) -> Result<Vec<usize>, PluginError> {
        ids.iter()
            .map(|id| {
                self.lookup
                    .get(id)
                    .copied()
                    .ok_or_else(|| PluginError::UnknownId(id.to_string()))
            })
            .collect()
    }

    fn score_batch(&mut self, elements: &[usize]) -> Result<Vec<f64>, PluginError> {
        match &mut self.backend {
            Backend::Relu => Ok(elements
                .iter()
                .map(|&i| self.records[i].value.unwrap_or(0.0).max(0.0))
                .collect()),
            Backend::Constant(v) => Ok(vec![*v; elements.len()]),
            Backend::Noop => Ok(vec![0.0; elements.len()]),
            Backend::External(ext) => {
                let records = self.records;
                let ids: Vec<ElementId> = elements.iter().map(|&i| records[i].id.clone()).collect();
                let payloads = elements
                    .iter()
                    .map(|&i| serde_json::to_value(&records[i]))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| PluginError::Failed(e.to_string()))?;
                ext.request(&ids, &payloads)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plugin::score_ids;

    fn records() -> Vec<Record> {
        (0..3)
            .map(|i| Record {
                id: ElementId::new(format!("r{i}")).unwrap(),
                vector: vec![0.0; i + 1],
                value: Some(i as f64 - 1.0),
                label: None,
            })
            .collect()
    }

    fn ids(rs: &[Record]) -> Vec<ElementId> {
        rs.iter().map(|r| r.id.clone()).collect()
    }

    #[test]
    fn kinds_parse() {
        assert_eq!("relu".parse::<ScorerKind>().unwrap(), ScorerKind::Relu);
        assert_eq!("NOOP".parse::<ScorerKind>().unwrap(), ScorerKind::Noop);
        assert_eq!(
            "constant:2.5".parse::<ScorerKind>().unwrap(),
            ScorerKind::Constant(2.5)
        );
        assert!("constant:-1".parse::<ScorerKind>().is_err());
        assert_eq!(
            "python3 score.py".parse::<ScorerKind>().unwrap(),
            ScorerKind::External("python3 score.py".into())
        );
    }

    #[test]
    fn relu_clips() {
        let rs = records();
        let mut s = DatasetScorer::new(&rs, ScorerKind::Relu).unwrap();
        assert_eq!(score_ids(&mut s, &ids(&rs)).unwrap(), vec![0.0, 0.0, 1.0]);
    }

    fn python_scorer(body: &str) -> String {
        format!(
            "python3 -u -c 'import sys, json\nfor line in sys.stdin:\n    req = json.loads(line)\n    {body}\n    sys.stdout.write(json.dumps(out) + \"\\n\")\n    sys.stdout.flush()'"
        )
    }

    #[test]
    fn external_echo_vector_length() {
        let rs = records();
        let cmd =
            python_scorer("out = {\"scores\": [len(p[\"vector\"]) for p in req[\"payloads\"]]}");
        let mut s = DatasetScorer::new(&rs, ScorerKind::External(cmd)).unwrap();
        assert_eq!(score_ids(&mut s, &ids(&rs)).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(score_ids(&mut s, &ids(&rs[1..])).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn external_length_mismatch_aborts() {
        let rs = records();
        let cmd = python_scorer("out = {\"scores\": [1.0]}");
        let mut s = DatasetScorer::new(&rs, ScorerKind::External(cmd)).unwrap();
        assert!(matches!(
            score_ids(&mut s, &ids(&rs)),
            Err(PluginError::LengthMismatch {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn external_negative_score_aborts() {
        let rs = records();
        let cmd = python_scorer("out = {\"scores\": [-1.0 for _ in req[\"ids\"]]}");
        let mut s = DatasetScorer::new(&rs, ScorerKind::External(cmd)).unwrap();
        assert!(matches!(
            score_ids(&mut s, &ids(&rs)),
            Err(PluginError::InvalidScore { position: 0, .. })
        ));
    }

    #[test]
    fn external_exit_and_garbage() {
        let rs = records();
        let mut gone = DatasetScorer::new(&rs, ScorerKind::External("true".into())).unwrap();
        assert!(matches!(
            score_ids(&mut gone, &ids(&rs)),
            Err(PluginError::Protocol(_))
        ));
        let cmd = python_scorer("out = \"nope\"");
        let mut junk = DatasetScorer::new(&rs, ScorerKind::External(cmd)).unwrap();
        assert!(matches!(
            score_ids(&mut junk, &ids(&rs)),
            Err(PluginError::Protocol(_))
        ));
    }

    #[test]
    fn serve_answers_each_line() {
        let input = b"{\"ids\":[\"a\",\"b\"],\"payloads\":[1,2]}\n\n{\"ids\":[],\"payloads\":[]}\n";
        let mut out = Vec::new();
        serve(&input[..], &mut out, |ids, _| {
            vec![ids.len() as f64; ids.len()]
        })
        .unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"scores\":[2.0,2.0]}\n{\"scores\":[]}\n"
        );
    }
}
