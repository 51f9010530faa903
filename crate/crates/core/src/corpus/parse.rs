use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Read};
use std::ops::AddAssign;
use std::path::Path;

use flate2::read::MultiGzDecoder;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::AbstractRecord;
use crate::exec::Exec;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{file}: cannot open: {source}")]
    Open {
        file: String,
        #[source]
        source: io::Error,
    },
    #[error("{file}: read failed near byte {position}: {source}")]
    Read {
        file: String,
        position: u64,
        #[source]
        source: io::Error,
    },
    #[error("{file}: malformed XML at byte {position}: {message}")]
    Xml {
        file: String,
        position: u64,
        message: String,
    },
}

/// Per-file parse counters. Merging is associative and commutative.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub citations: u64,
    pub records: u64,
    pub skipped_no_abstract: u64,
    pub skipped_no_pmid: u64,
    pub duplicate_pmids: u64,
}

impl AddAssign for IngestStats {
    fn add_assign(&mut self, o: Self) {
        self.citations += o.citations;
        self.records += o.records;
        self.skipped_no_abstract += o.skipped_no_abstract;
        self.skipped_no_pmid += o.skipped_no_pmid;
        self.duplicate_pmids += o.duplicate_pmids;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Capture {
    Pmid,
    Title,
    Section,
}

#[derive(Default)]
struct Citation {
    pmid: String,
    title: String,
    sections: Vec<String>,
    current: String,
}

/// Streaming iterator over the citations of one baseline file.
///
/// Memory is bounded by a single citation: the reader buffer is cleared
/// after every event and the accumulated citation is dropped as soon as its
/// closing tag is seen.
pub struct BaselineParser<R: BufRead> {
    reader: Reader<R>,
    source: String,
    buf: Vec<u8>,
    path: Vec<Vec<u8>>,
    citation: Option<Citation>,
    capture: Option<(Capture, usize)>,
    stats: IngestStats,
    done: bool,
}

/// Parses a gzip-compressed baseline stream.
pub fn parse_baseline_stream<R: Read>(
    input: R,
    source: &str,
) -> BaselineParser<BufReader<MultiGzDecoder<R>>> {
    BaselineParser::new(BufReader::new(MultiGzDecoder::new(input)), source)
}

/// Opens a baseline file, accepting both gzip-compressed and plain XML.
pub fn open_baseline(path: &Path) -> Result<BaselineParser<Box<dyn BufRead>>, IngestError> {
    let name = path.display().to_string();
    let open_err = |source| IngestError::Open {
        file: name.clone(),
        source,
    };
    let mut file = BufReader::new(File::open(path).map_err(open_err)?);
    let gz = file
        .fill_buf()
        .map_err(open_err)?
        .starts_with(&[0x1f, 0x8b]);
    let inner: Box<dyn BufRead> = if gz {
        Box::new(BufReader::new(MultiGzDecoder::new(file)))
    } else {
        Box::new(file)
    };
    Ok(BaselineParser::new(inner, &name))
}

impl<R: BufRead> BaselineParser<R> {
    pub fn new(input: R, source: &str) -> Self {
        let mut reader = Reader::from_reader(input);
        reader.config_mut().trim_text(false);
        Self {
            reader,
            source: source.to_string(),
            buf: Vec::new(),
            path: Vec::new(),
            citation: None,
            capture: None,
            stats: IngestStats::default(),
            done: false,
        }
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    fn parent(&self) -> &[u8] {
        self.path
            .len()
            .checked_sub(2)
            .map(|i| self.path[i].as_slice())
            .unwrap_or(b"")
    }

    fn error(&self, err: quick_xml::Error) -> IngestError {
        let position = self.reader.buffer_position();
        match err {
            quick_xml::Error::Io(e) => IngestError::Read {
                file: self.source.clone(),
                position,
                source: io::Error::new(e.kind(), e.to_string()),
            },
            other => IngestError::Xml {
                file: self.source.clone(),
                position,
                message: other.to_string(),
            },
        }
    }

    fn open(&mut self, name: &[u8]) {
        self.path.push(name.to_vec());
        if matches!(name, b"PubmedArticle" | b"PubmedBookArticle") {
            self.citation = Some(Citation::default());
            self.capture = None;
            return;
        }
        let Some(citation) = self.citation.as_ref() else {
            return;
        };
        if self.capture.is_some() {
            return;
        }
        let depth = self.path.len();
        let target = match name {
            b"PMID"
                if citation.pmid.is_empty()
                    && matches!(self.parent(), b"MedlineCitation" | b"BookDocument") =>
            {
                Some(Capture::Pmid)
            }
            b"ArticleTitle" if citation.title.is_empty() => Some(Capture::Title),
            b"AbstractText" if self.parent() == b"Abstract" => Some(Capture::Section),
            _ => None,
        };
        self.capture = target.map(|t| (t, depth));
    }

    fn close(&mut self) -> Option<AbstractRecord> {
        let depth = self.path.len();
        let name = self.path.pop().unwrap_or_default();
        if let Some((target, d)) = self.capture {
            if d == depth {
                self.capture = None;
                if let Some(c) = self.citation.as_mut() {
                    let text = std::mem::take(&mut c.current);
                    let text = normalize_space(&text);
                    match target {
                        Capture::Pmid => c.pmid = text,
                        Capture::Title => c.title = text,
                        Capture::Section if !text.is_empty() => c.sections.push(text),
                        Capture::Section => {}
                    }
                }
            }
        }
        if matches!(name.as_slice(), b"PubmedArticle" | b"PubmedBookArticle") {
            let c = self.citation.take()?;
            self.stats.citations += 1;
            if c.pmid.is_empty() {
                self.stats.skipped_no_pmid += 1;
                return None;
            }
            if c.sections.is_empty() {
                self.stats.skipped_no_abstract += 1;
                return None;
            }
            self.stats.records += 1;
            return Some(AbstractRecord {
                pmid: c.pmid,
                title: c.title,
                abstract_text: c.sections.join(" "),
                source_file: self.source.clone(),
            });
        }
        None
    }

    fn text(&mut self, text: &str) {
        if self.capture.is_some() {
            if let Some(c) = self.citation.as_mut() {
                c.current.push_str(text);
            }
        }
    }
}

impl<R: BufRead> Iterator for BaselineParser<R> {
    type Item = Result<AbstractRecord, IngestError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            let event = match self.reader.read_event_into(&mut self.buf) {
                Ok(ev) => ev.into_owned(),
                Err(e) => {
                    self.done = true;
                    return Some(Err(self.error(e)));
                }
            };
            match event {
                Event::Start(e) => {
                    let name = e.local_name().as_ref().to_vec();
                    self.open(&name);
                }
                Event::Empty(e) => {
                    let name = e.local_name().as_ref().to_vec();
                    self.open(&name);
                    if let Some(rec) = self.close() {
                        return Some(Ok(rec));
                    }
                }
                Event::End(_) => {
                    if let Some(rec) = self.close() {
                        return Some(Ok(rec));
                    }
                }
                Event::Text(t) if self.capture.is_some() => {
                    let s = match t.unescape() {
                        Ok(s) => s.into_owned(),
                        Err(_) => String::from_utf8_lossy(&t).into_owned(),
                    };
                    self.text(&s);
                }
                Event::CData(t) if self.capture.is_some() => {
                    let s = String::from_utf8_lossy(&t).into_owned();
                    self.text(&s);
                }
                Event::Eof => {
                    self.done = true;
                    if !self.path.is_empty() {
                        return Some(Err(IngestError::Xml {
                            file: self.source.clone(),
                            position: self.reader.buffer_position(),
                            message: format!(
                                "unexpected end of document inside <{}>",
                                String::from_utf8_lossy(self.path.last().unwrap())
                            ),
                        }));
                    }
                }
                _ => {}
            }
        }
        None
    }
}

fn normalize_space(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Parses one whole baseline file.
pub fn parse_file(path: &Path) -> Result<(Vec<AbstractRecord>, IngestStats), IngestError> {
    let mut parser = open_baseline(path)?;
    let records = parser.by_ref().collect::<Result<Vec<_>, _>>()?;
    Ok((records, parser.stats()))
}

/// Parses several baseline files (concurrently when parallel) and
/// concatenates their records in file order, keeping the first record seen
/// for each pmid.
pub fn ingest_files(
    paths: &[std::path::PathBuf],
    exec: Exec,
) -> Result<(Vec<AbstractRecord>, IngestStats), IngestError> {
    let per_file = exec.map(paths, |p| parse_file(p));
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    let mut stats = IngestStats::default();
    for result in per_file {
        let (records, s) = result?;
        stats += s;
        for r in records {
            if seen.insert(r.pmid.clone()) {
                out.push(r);
            } else {
                stats.duplicate_pmids += 1;
                stats.records -= 1;
            }
        }
    }
    Ok((out, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use flate2::write::GzEncoder;
    use flate2::Compression;
    use std::io::Write;

    fn gz(xml: &str) -> Vec<u8> {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(xml.as_bytes()).unwrap();
        enc.finish().unwrap()
    }

    const THREE: &str = r#"<?xml version="1.0" encoding="utf-8"?>
<!DOCTYPE PubmedArticleSet PUBLIC "-//NLM//DTD PubMedArticle, 1st January 2024//EN" "https://dtd.nlm.nih.gov/ncbi/pubmed/out/pubmed_240101.dtd">
<PubmedArticleSet>
  <PubmedArticle>
    <MedlineCitation Status="MEDLINE" Owner="NLM">
      <PMID Version="1">101</PMID>
      <Article PubModel="Print">
        <ArticleTitle>Blood pressure in <i>adolescents</i>.</ArticleTitle>
        <Abstract>
          <AbstractText Label="BACKGROUND">Systolic blood
             pressure was measured.</AbstractText>
          <AbstractText Label="RESULTS">Mean SBP was 118.5 mmHg &amp; rising.</AbstractText>
        </Abstract>
      </Article>
      <CommentsCorrectionsList>
        <CommentsCorrections RefType="Cites"><PMID Version="1">999</PMID></CommentsCorrections>
      </CommentsCorrectionsList>
    </MedlineCitation>
  </PubmedArticle>
  <PubmedArticle>
    <MedlineCitation><PMID Version="1">102</PMID>
      <Article><ArticleTitle>No abstract here</ArticleTitle></Article>
    </MedlineCitation>
  </PubmedArticle>
  <PubmedArticle>
    <MedlineCitation><PMID Version="1">103</PMID>
      <Article><ArticleTitle>Plain</ArticleTitle>
        <Abstract><AbstractText>One section only.</AbstractText></Abstract>
        <OtherAbstract><AbstractText>Ignored translation.</AbstractText></OtherAbstract>
      </Article>
    </MedlineCitation>
  </PubmedArticle>
</PubmedArticleSet>
"#;

    #[test]
    fn three_citations_two_abstracts() {
        let data = gz(THREE);
        let mut p = parse_baseline_stream(data.as_slice(), "f1.xml.gz");
        let recs: Vec<_> = p.by_ref().collect::<Result<_, _>>().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(p.stats().skipped_no_abstract, 1);
        assert_eq!(p.stats().citations, 3);
        assert_eq!(recs[0].pmid, "101");
        assert_eq!(recs[0].title, "Blood pressure in adolescents.");
        assert_eq!(
            recs[0].abstract_text,
            "Systolic blood pressure was measured. Mean SBP was 118.5 mmHg & rising."
        );
        assert_eq!(recs[1].abstract_text, "One section only.");
        assert_eq!(recs[1].source_file, "f1.xml.gz");
    }

    #[test]
    fn empty_set() {
        let data = gz("<?xml version=\"1.0\"?><PubmedArticleSet></PubmedArticleSet>");
        let recs: Vec<_> = parse_baseline_stream(data.as_slice(), "e")
            .collect::<Result<_, _>>()
            .unwrap();
        assert!(recs.is_empty());
    }

    #[test]
    fn truncated_gzip_names_file() {
        let data = gz(THREE);
        let cut = &data[..data.len() / 2];
        let err = parse_baseline_stream(cut, "pubmed24n0001.xml.gz")
            .find_map(|r| r.err())
            .expect("truncated stream must fail");
        assert!(err.to_string().contains("pubmed24n0001.xml.gz"), "{err}");
    }

    #[test]
    fn malformed_xml_reports_position() {
        let data = gz("<PubmedArticleSet><PubmedArticle></Wrong></PubmedArticleSet>");
        let err = parse_baseline_stream(data.as_slice(), "bad")
            .find_map(|r| r.err())
            .unwrap();
        match err {
            IngestError::Xml { file, position, .. } => {
                assert_eq!(file, "bad");
                assert!(position > 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ingest_dedups_across_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.xml.gz");
        let b = dir.path().join("b.xml");
        std::fs::write(&a, gz(THREE)).unwrap();
        std::fs::write(&b, THREE).unwrap();
        let (recs, stats) = ingest_files(&[a, b], Exec::default()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(stats.duplicate_pmids, 2);
        assert_eq!(stats.records, 2);
        assert!(recs[0].source_file.ends_with("a.xml.gz"));
    }
}
