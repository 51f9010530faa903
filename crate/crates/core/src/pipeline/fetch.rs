use std::io::Read;
use std::path::{Path, PathBuf};
use std::thread;

use super::io::write_atomic;
use super::PipelineError;
use crate::extraction::RetryPolicy;

fn file_name(url: &str) -> Option<&str> {
    let name = url.split(['?', '#']).next()?.rsplit('/').next()?;
    (!name.is_empty()).then_some(name)
}

fn download(url: &str, retry: &RetryPolicy) -> Result<Vec<u8>, String> {
    let mut attempt = 0;
    loop {
        let result = ureq::get(url).call();
        let transient = match result {
            Ok(resp) => {
                let mut body = Vec::new();
                match resp.into_reader().read_to_end(&mut body) {
                    Ok(_) => return Ok(body),
                    Err(e) => e.to_string(),
                }
            }
            Err(ureq::Error::Status(code, _)) if code != 429 && code < 500 => {
                return Err(format!("HTTP {code}"));
            }
            Err(e) => e.to_string(),
        };
        if attempt >= retry.max_retries {
            return Err(transient);
        }
        attempt += 1;
        log::warn!("{url}: {transient}; retry {attempt}");
        thread::sleep(retry.delay(attempt));
    }
}

/// Downloads each URL into `dest` under its own file name. Files already
/// present are kept, so an interrupted fetch can simply be repeated.
pub fn fetch(
    urls: &[String],
    dest: &Path,
    retry: &RetryPolicy,
) -> Result<Vec<PathBuf>, PipelineError> {
    std::fs::create_dir_all(dest)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", dest.display())))?;
    let mut out = Vec::with_capacity(urls.len());
    for url in urls {
        let name = file_name(url)
            .ok_or_else(|| PipelineError::Config(format!("no file name in URL {url}")))?;
        let path = dest.join(name);
        if path.exists() {
            log::info!("{} already present", path.display());
        } else {
            let fail = |message| PipelineError::Stage {
                stage: super::Stage::Ingest,
                message: format!("fetch {url}: {message}"),
            };
            let body = download(url, retry).map_err(fail)?;
            write_atomic(&path, &body).map_err(|e| fail(e.to_string()))?;
            log::info!("fetched {} ({} bytes)", path.display(), body.len());
        }
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_from_urls() {
        assert_eq!(
            file_name("https://ftp.ncbi.nlm.nih.gov/pubmed/baseline/pubmed24n0001.xml.gz"),
            Some("pubmed24n0001.xml.gz")
        );
        assert_eq!(file_name("http://host/a.xml?x=1"), Some("a.xml"));
        assert_eq!(file_name("http://host/"), None);
    }
}
