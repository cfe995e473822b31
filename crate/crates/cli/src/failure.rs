use std::fmt::Display;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Io,
    Config,
    Judge,
    ParseExhaustion,
}

impl Category {
    pub fn code(self) -> u8 {
        match self {
            Category::Io => 1,
            Category::Config => 2,
            Category::Judge => 3,
            Category::ParseExhaustion => 4,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Category::Io => "io",
            Category::Config => "config",
            Category::Judge => "judge",
            Category::ParseExhaustion => "parse",
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub category: Category,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn new(category: Category, error: impl Into<anyhow::Error>) -> Self {
        Self { category, error: error.into() }
    }

    pub fn config(msg: impl Display) -> Self {
        Self::new(Category::Config, anyhow::anyhow!("{msg}"))
    }
}

pub trait Categorize<T> {
    fn or_fail(self, category: Category) -> Result<T, Failure>;

    fn config(self) -> Result<T, Failure>
    where
        Self: Sized,
    {
        self.or_fail(Category::Config)
    }

    fn io(self) -> Result<T, Failure>
    where
        Self: Sized,
    {
        self.or_fail(Category::Io)
    }
}

impl<T, E: Into<anyhow::Error>> Categorize<T> for Result<T, E> {
    fn or_fail(self, category: Category) -> Result<T, Failure> {
        self.map_err(|e| Failure::new(category, e))
    }
}
