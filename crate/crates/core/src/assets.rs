//! Stopword list and lexicons, embedded or loaded from an asset directory.

use std::path::Path;

use crate::chunker::{Chunker, StopWords};
use crate::error::Result;
use crate::gt_matcher::Lexicons;

pub const STOPWORDS_FILE: &str = "stopwords.txt";
pub const LEXICONS_FILE: &str = "lexicons.toml";

/// Environment variable naming an asset directory that overrides the
/// embedded defaults.
pub const ASSETS_ENV: &str = "HSPP_ASSETS";

const DEFAULT_STOPWORDS: &str = include_str!("../assets/stopwords.txt");
const DEFAULT_LEXICONS: &str = include_str!("../assets/lexicons.toml");

#[derive(Debug, Clone)]
pub struct Assets {
    pub stopwords: StopWords,
    pub lexicons: Lexicons,
}

impl Assets {
    pub fn embedded() -> Self {
        Self {
            stopwords: StopWords::parse(DEFAULT_STOPWORDS),
            lexicons: Lexicons::parse_toml(DEFAULT_LEXICONS).expect("embedded lexicons parse"),
        }
    }

    /// Loads `stopwords.txt` and `lexicons.toml` from `dir`; a file missing
    /// from the directory falls back to the embedded copy.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut assets = Self::embedded();
        let stop = dir.join(STOPWORDS_FILE);
        if stop.exists() {
            let src = std::fs::read_to_string(&stop).map_err(|e| crate::Error::io(&stop, e))?;
            assets.stopwords = StopWords::parse(&src);
        }
        let lex = dir.join(LEXICONS_FILE);
        if lex.exists() {
            assets.lexicons = Lexicons::load(&lex)?;
        }
        Ok(assets)
    }

    /// `dir` if given, else `$HSPP_ASSETS`, else the embedded defaults.
    pub fn resolve(dir: Option<&Path>) -> Result<Self> {
        match dir {
            Some(d) => Self::load_dir(d),
            None => match std::env::var_os(ASSETS_ENV) {
                Some(d) => Self::load_dir(Path::new(&d)),
                None => Ok(Self::embedded()),
            },
        }
    }

    pub fn chunker(&self) -> Chunker {
        Chunker::new(self.stopwords.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedded_assets_parse() {
        let a = Assets::embedded();
        assert!(a.stopwords.contains("the"));
        assert!(a.stopwords.contains("image"));
        assert!(a.lexicons.objects.contains("car"));
        assert_eq!(a.lexicons.attribute_category("red"), Some("color"));
        assert_eq!(a.lexicons.attribute_categories.len(), 5);
        assert!(a.lexicons.is_symmetric("park-next-to"));
    }

    #[test]
    fn directory_overrides_stopwords() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(STOPWORDS_FILE), "zebra\n").unwrap();
        let a = Assets::load_dir(dir.path()).unwrap();
        assert!(a.stopwords.contains("zebra"));
        assert!(!a.stopwords.contains("the"));
        assert!(a.lexicons.objects.contains("car"));
    }
}
