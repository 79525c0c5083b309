//! Company-year panel: CSV contract, validation, and year windows.
//!
//! One row per company-year with the columns
//! `company_id, year, industry, IR, EQ, MG, EPS, CEOt, REV, Earn, Eprof, MCap, TSR`.
//! Every company must cover the same contiguous range of years, keep one
//! industry label, and carry finite numbers in every cell. Currency columns
//! are raw dollars.
//!
//! The canonical serialisation written by [`PanelDataset::write_csv`] uses
//! the default column names in the order above, companies in order of first
//! appearance, years ascending, and Rust's shortest round-trip float format.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Panel variables in file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variable {
    IR,
    EQ,
    MG,
    EPS,
    CEOt,
    REV,
    Earn,
    Eprof,
    MCap,
    TSR,
}

pub const NUM_VARIABLES: usize = 10;

impl Variable {
    pub const ALL: [Variable; NUM_VARIABLES] = [
        Variable::IR,
        Variable::EQ,
        Variable::MG,
        Variable::EPS,
        Variable::CEOt,
        Variable::REV,
        Variable::Earn,
        Variable::Eprof,
        Variable::MCap,
        Variable::TSR,
    ];
    /// Ratio variables, aggregated untransformed.
    pub const EXPLANATORY: [Variable; 4] = [Variable::IR, Variable::EQ, Variable::MG, Variable::EPS];
    pub const RESPONSES: [Variable; 5] = [
        Variable::REV,
        Variable::Earn,
        Variable::Eprof,
        Variable::MCap,
        Variable::TSR,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variable::IR => "IR",
            Variable::EQ => "EQ",
            Variable::MG => "MG",
            Variable::EPS => "EPS",
            Variable::CEOt => "CEOt",
            Variable::REV => "REV",
            Variable::Earn => "Earn",
            Variable::Eprof => "Eprof",
            Variable::MCap => "MCap",
            Variable::TSR => "TSR",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Monetary variables get the log-type transform before aggregation.
    pub fn is_transformed(self) -> bool {
        !Variable::EXPLANATORY.contains(&self)
    }
}

/// Header names for each column.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnNames {
    pub company_id: String,
    pub year: String,
    pub industry: String,
    pub variables: [String; NUM_VARIABLES],
}

impl Default for ColumnNames {
    fn default() -> Self {
        Self {
            company_id: "company_id".into(),
            year: "year".into(),
            industry: "industry".into(),
            variables: Variable::ALL.map(|v| v.name().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub columns: ColumnNames,
    pub max_industries: usize,
    /// When set, any other industry label is a schema error.
    pub allowed_industries: Option<Vec<String>>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        Self {
            columns: ColumnNames::default(),
            max_industries: 6,
            allowed_industries: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Company {
    pub id: String,
    pub industry: String,
    /// One entry per year from `first_year`, values in [`Variable::ALL`] order.
    pub values: Vec<[f64; NUM_VARIABLES]>,
}

/// Validated, immutable company-year panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    first_year: i32,
    last_year: i32,
    companies: Vec<Company>,
}

impl PanelDataset {
    /// Builds a panel from complete per-company series, validating shape.
    pub fn new(first_year: i32, companies: Vec<Company>) -> Result<Self> {
        let len = companies
            .first()
            .map(|c| c.values.len())
            .ok_or_else(|| Error::domain("panel has no companies"))?;
        if len == 0 {
            return Err(Error::domain("panel has no years"));
        }
        let mut seen = BTreeSet::new();
        for c in &companies {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::Integrity(format!("duplicate company {:?}", c.id)));
            }
            if c.values.len() != len {
                let year = first_year + c.values.len().min(len) as i32;
                return Err(Error::Coverage {
                    company: c.id.clone(),
                    year,
                });
            }
            if c.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("company {:?} has non-finite values", c.id)));
            }
        }
        Ok(Self {
            first_year,
            last_year: first_year + len as i32 - 1,
            companies,
        })
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.last_year
    }

    pub fn years(&self) -> std::ops::RangeInclusive<i32> {
        self.first_year..=self.last_year
    }

    pub fn companies(&self) -> &[Company] {
        &self.companies
    }

    pub fn num_companies(&self) -> usize {
        self.companies.len()
    }

    pub fn num_records(&self) -> usize {
        self.companies.len() * (self.last_year - self.first_year + 1) as usize
    }

    pub fn company_ids(&self) -> Vec<&str> {
        self.companies.iter().map(|c| c.id.as_str()).collect()
    }

    /// Distinct industry labels, sorted.
    pub fn industries(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.companies.iter().map(|c| c.industry.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    fn check_year(&self, company: &Company, year: i32) -> Result<usize> {
        if year < self.first_year || year > self.last_year {
            return Err(Error::Coverage {
                company: company.id.clone(),
                year,
            });
        }
        Ok((year - self.first_year) as usize)
    }

    pub fn value(&self, company: usize, year: i32, var: Variable) -> Result<f64> {
        let c = &self.companies[company];
        let k = self.check_year(c, year)?;
        Ok(c.values[k][var.index()])
    }

    /// Values of `var` for years `start..=end`, oldest first.
    pub fn series(&self, company: usize, var: Variable, start: i32, end: i32) -> Result<Vec<f64>> {
        let c = &self.companies[company];
        let a = self.check_year(c, start)?;
        let b = self.check_year(c, end)?;
        Ok(c.values[a..=b].iter().map(|row| row[var.index()]).collect())
    }

    /// Sub-panel restricted to `[start, end]`; the company set is unchanged.
    pub fn window(&self, start: i32, end: i32) -> Result<PanelDataset> {
        let first = self.companies.first().map(|c| c.id.clone()).unwrap_or_default();
        if start > end {
            return Err(Error::domain(format!("window start {start} after end {end}")));
        }
        for y in [start, end] {
            if y < self.first_year || y > self.last_year {
                return Err(Error::Coverage {
                    company: first.clone(),
                    year: y,
                });
            }
        }
        let a = (start - self.first_year) as usize;
        let b = (end - self.first_year) as usize;
        let companies = self
            .companies
            .iter()
            .map(|c| Company {
                id: c.id.clone(),
                industry: c.industry.clone(),
                values: c.values[a..=b].to_vec(),
            })
            .collect();
        Ok(PanelDataset {
            first_year: start,
            last_year: end,
            companies,
        })
    }

    /// Writes the canonical CSV form.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
        let names = ColumnNames::default();
        let mut header = vec![names.company_id, names.year, names.industry];
        header.extend(names.variables.iter().cloned());
        w.write_record(&header)?;
        for c in &self.companies {
            for (k, row) in c.values.iter().enumerate() {
                let mut rec = vec![
                    c.id.clone(),
                    (self.first_year + k as i32).to_string(),
                    c.industry.clone(),
                ];
                rec.extend(row.iter().map(|v| format!("{v}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }
}

/// Loads and validates a panel file.
pub fn load_panel(path: impl AsRef<Path>, schema: &SchemaConfig) -> Result<PanelDataset> {
    let file = File::open(path.as_ref())?;
    read_panel(file, schema)
}

/// Parses and validates panel CSV from any reader.
pub fn read_panel<R: Read>(reader: R, schema: &SchemaConfig) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Schema(format!("missing column {name:?} in header")))
    };
    let cols = &schema.columns;
    let id_col = find(&cols.company_id)?;
    let year_col = find(&cols.year)?;
    let ind_col = find(&cols.industry)?;
    let var_cols: Vec<usize> = cols.variables.iter().map(|n| find(n)).collect::<Result<_>>()?;

    struct Partial {
        industry: String,
        rows: HashMap<i32, [f64; NUM_VARIABLES]>,
    }
    let mut order: Vec<String> = Vec::new();
    let mut partial: HashMap<String, Partial> = HashMap::new();

    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec?;
        let cell = |c: usize, name: &str| -> Result<&str> {
            rec.get(c).map(str::trim).ok_or_else(|| Error::Parse {
                row: line,
                column: name.to_string(),
                message: "missing cell".into(),
            })
        };
        let id = cell(id_col, &cols.company_id)?.to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                row: line,
                column: cols.company_id.clone(),
                message: "empty company id".into(),
            });
        }
        let year_text = cell(year_col, &cols.year)?;
        let year: i32 = year_text.parse().map_err(|_| Error::Parse {
            row: line,
            column: cols.year.clone(),
            message: format!("cannot parse {year_text:?} as a year"),
        })?;
        let industry = cell(ind_col, &cols.industry)?.to_string();
        if let Some(allowed) = &schema.allowed_industries {
            if !allowed.contains(&industry) {
                return Err(Error::Schema(format!(
                    "unknown industry {industry:?} at row {line}"
                )));
            }
        }
        let mut values = [0.0; NUM_VARIABLES];
        for (v, (&c, name)) in var_cols.iter().zip(cols.variables.iter()).enumerate() {
            let text = cell(c, name)?;
            let parsed: f64 = text.parse().map_err(|_| Error::Parse {
                row: line,
                column: name.clone(),
                message: format!("cannot parse {text:?} as a number"),
            })?;
            if !parsed.is_finite() {
                return Err(Error::Parse {
                    row: line,
                    column: name.clone(),
                    message: format!("non-finite value {text:?}"),
                });
            }
            values[v] = parsed;
        }
        let entry = partial.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            Partial {
                industry: industry.clone(),
                rows: HashMap::new(),
            }
        });
        if entry.industry != industry {
            return Err(Error::Integrity(format!(
                "company {id:?} changes industry from {:?} to {industry:?} at row {line}",
                entry.industry
            )));
        }
        if entry.rows.insert(year, values).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate record for company {id:?} in year {year} (row {line})"
            )));
        }
    }

    if order.is_empty() {
        return Err(Error::domain("panel file has no data rows"));
    }
    let first_year = partial.values().flat_map(|p| p.rows.keys()).copied().min().unwrap();
    let last_year = partial.values().flat_map(|p| p.rows.keys()).copied().max().unwrap();

    let industries: BTreeSet<&str> = partial.values().map(|p| p.industry.as_str()).collect();
    if industries.len() > schema.max_industries {
        return Err(Error::Schema(format!(
            "{} distinct industries exceed the limit of {}",
            industries.len(),
            schema.max_industries
        )));
    }

    let mut companies = Vec::with_capacity(order.len());
    for id in order {
        let p = partial.remove(&id).unwrap();
        let mut values = Vec::with_capacity((last_year - first_year + 1) as usize);
        for year in first_year..=last_year {
            match p.rows.get(&year) {
                Some(v) => values.push(*v),
                None => return Err(Error::Coverage { company: id, year }),
            }
        }
        companies.push(Company {
            id,
            industry: p.industry,
            values,
        });
    }
    PanelDataset::new(first_year, companies)
}
