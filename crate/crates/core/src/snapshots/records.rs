use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;

/// Purchases of one attribute by one community in one month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct InteractionRecord {
    pub month: u32,
    pub community: usize,
    pub attribute: usize,
    pub sales: u64,
}

/// Stable id ↔ index assignment for both node types.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalogs {
    communities: Vec<String>,
    attributes: Vec<String>,
    community_index: HashMap<String, usize>,
    attribute_index: HashMap<String, usize>,
}

impl Catalogs {
    pub fn new(communities: Vec<String>, attributes: Vec<String>) -> Result<Self> {
        let mut c = Catalogs::default();
        for id in communities {
            if c.community_index.contains_key(&id) {
                return Err(Error::InvalidInput(format!("duplicate community id `{id}`")));
            }
            c.intern_community(&id);
        }
        for id in attributes {
            if c.attribute_index.contains_key(&id) {
                return Err(Error::InvalidInput(format!("duplicate attribute id `{id}`")));
            }
            c.intern_attribute(&id);
        }
        Ok(c)
    }

    fn intern_community(&mut self, id: &str) -> usize {
        if let Some(&i) = self.community_index.get(id) {
            return i;
        }
        self.communities.push(id.to_string());
        self.community_index.insert(id.to_string(), self.communities.len() - 1);
        self.communities.len() - 1
    }

    fn intern_attribute(&mut self, id: &str) -> usize {
        if let Some(&i) = self.attribute_index.get(id) {
            return i;
        }
        self.attributes.push(id.to_string());
        self.attribute_index.insert(id.to_string(), self.attributes.len() - 1);
        self.attributes.len() - 1
    }

    pub fn num_communities(&self) -> usize {
        self.communities.len()
    }

    pub fn num_attributes(&self) -> usize {
        self.attributes.len()
    }

    pub fn communities(&self) -> &[String] {
        &self.communities
    }

    pub fn attributes(&self) -> &[String] {
        &self.attributes
    }

    pub fn community(&self, index: usize) -> &str {
        &self.communities[index]
    }

    pub fn attribute(&self, index: usize) -> &str {
        &self.attributes[index]
    }

    pub fn community_index(&self, id: &str) -> Option<usize> {
        self.community_index.get(id).copied()
    }

    pub fn attribute_index(&self, id: &str) -> Option<usize> {
        self.attribute_index.get(id).copied()
    }
}

/// Ingested interaction data: catalogs, deduplicated records sorted by
/// `(month, community, attribute)`, and the observed month range.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    catalogs: Catalogs,
    records: Vec<InteractionRecord>,
    months: Option<(u32, u32)>,
}

const COLUMNS: [&str; 4] = ["month", "community", "attribute", "sales"];

impl Dataset {
    /// Builds a dataset from already-indexed records. Duplicates are summed
    /// and zero-sales records dropped. The month range spans the records
    /// unless given explicitly.
    pub fn from_records(
        catalogs: Catalogs,
        records: impl IntoIterator<Item = InteractionRecord>,
        months: Option<(u32, u32)>,
    ) -> Result<Self> {
        let mut merged: BTreeMap<(u32, usize, usize), u64> = BTreeMap::new();
        let mut span: Option<(u32, u32)> = None;
        for r in records {
            if r.month == 0 {
                return Err(Error::InvalidInput("months are 1-based".into()));
            }
            if r.community >= catalogs.num_communities() || r.attribute >= catalogs.num_attributes() {
                return Err(Error::InvalidInput(format!("record {r:?} outside the catalogs")));
            }
            span = Some(match span {
                None => (r.month, r.month),
                Some((lo, hi)) => (lo.min(r.month), hi.max(r.month)),
            });
            *merged.entry((r.month, r.community, r.attribute)).or_default() += r.sales;
        }
        let months = match (months, span) {
            (Some((lo, hi)), Some((slo, shi))) if slo < lo || shi > hi => {
                return Err(Error::InvalidInput(format!(
                    "records span months {slo}..={shi}, outside the declared range {lo}..={hi}"
                )))
            }
            (Some(m), _) => Some(m),
            (None, s) => s,
        };
        let records = merged
            .into_iter()
            .filter(|&(_, s)| s > 0)
            .map(|((month, community, attribute), sales)| InteractionRecord {
                month,
                community,
                attribute,
                sales,
            })
            .collect();
        Ok(Self {
            catalogs,
            records,
            months,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        ingest(file)
    }

    pub fn catalogs(&self) -> &Catalogs {
        &self.catalogs
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    pub fn num_communities(&self) -> usize {
        self.catalogs.num_communities()
    }

    pub fn num_attributes(&self) -> usize {
        self.catalogs.num_attributes()
    }

    /// Inclusive `(first, last)` observed month, `None` for an empty dataset.
    pub fn month_range(&self) -> Option<(u32, u32)> {
        self.months
    }

    pub fn num_months(&self) -> usize {
        self.months.map_or(0, |(lo, hi)| (hi - lo + 1) as usize)
    }

    pub fn is_observed(&self, month: u32) -> bool {
        self.months.is_some_and(|(lo, hi)| (lo..=hi).contains(&month))
    }

    pub fn records_in(&self, month: u32) -> &[InteractionRecord] {
        let start = self.records.partition_point(|r| r.month < month);
        let end = self.records.partition_point(|r| r.month <= month);
        &self.records[start..end]
    }

    /// Raw sales counts for one month as a `communities × attributes` matrix.
    pub fn sales_matrix(&self, month: u32) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.num_communities(), self.num_attributes());
        for r in self.records_in(month) {
            m.set(r.community, r.attribute, r.sales as f64);
        }
        m
    }

    /// Writes the dataset in the interaction CSV format.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for r in &self.records {
            w.write_record([
                r.month.to_string().as_str(),
                self.catalogs.community(r.community),
                self.catalogs.attribute(r.attribute),
                r.sales.to_string().as_str(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Drops every attribute whose total sales across communities in
    /// `reference_month` fall below `threshold`, from the catalog and from
    /// all months. Attribute order is otherwise preserved.
    pub fn filter_min_sales(&self, threshold: u64, reference_month: u32) -> Result<Self> {
        if !self.is_observed(reference_month) {
            return Err(Error::MissingMonth(reference_month));
        }
        let mut totals = vec![0u64; self.num_attributes()];
        for r in self.records_in(reference_month) {
            totals[r.attribute] += r.sales;
        }
        let mut remap = vec![None; self.num_attributes()];
        let mut kept = Vec::new();
        for (j, &total) in totals.iter().enumerate() {
            if total >= threshold {
                remap[j] = Some(kept.len());
                kept.push(self.catalogs.attribute(j).to_string());
            }
        }
        let catalogs = Catalogs::new(self.catalogs.communities().to_vec(), kept)?;
        let records = self.records.iter().filter_map(|r| {
            remap[r.attribute].map(|attribute| InteractionRecord { attribute, ..*r })
        });
        Self::from_records(catalogs, records, self.months)
    }
}

fn parse_error(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

/// Reads the interaction CSV (`month,community,attribute,sales`).
///
/// Catalogs are assigned in first-appearance order, duplicate
/// `(month, community, attribute)` rows are summed, and rows with zero
/// sales contribute catalog entries and month coverage but no record.
pub fn ingest<R: Read>(source: R) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let mut rows = reader.records();
    let header = match rows.next() {
        None => return Ok(Dataset::default()),
        Some(h) => h?,
    };
    let mut position = [usize::MAX; 4];
    for (i, name) in header.iter().enumerate() {
        let name = name.trim_start_matches('\u{feff}');
        match COLUMNS.iter().position(|c| *c == name) {
            Some(k) if position[k] == usize::MAX => position[k] = i,
            Some(_) => return Err(parse_error(1, format!("duplicate column `{name}`"))),
            None => return Err(Error::UnknownColumn(name.to_string())),
        }
    }
    if let Some(k) = position.iter().position(|&p| p == usize::MAX) {
        return Err(Error::MissingColumn(COLUMNS[k].to_string()));
    }

    let mut catalogs = Catalogs::default();
    let mut records = Vec::new();
    let mut span: Option<(u32, u32)> = None;
    for row in rows {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        if row.len() == 1 && row.get(0).is_some_and(str::is_empty) {
            continue;
        }
        if row.len() != 4 {
            return Err(parse_error(line, format!("expected 4 fields, found {}", row.len())));
        }
        let field = |k: usize| row.get(position[k]).unwrap_or("");
        let month: u32 = field(0)
            .parse()
            .map_err(|_| parse_error(line, format!("invalid month `{}`", field(0))))?;
        if month == 0 {
            return Err(parse_error(line, "month indices start at 1"));
        }
        let (community, attribute) = (field(1), field(2));
        if community.is_empty() || attribute.is_empty() {
            return Err(parse_error(line, "empty community or attribute id"));
        }
        let raw_sales = field(3);
        if raw_sales.starts_with('-') {
            return Err(Error::NegativeSales {
                line,
                value: raw_sales.to_string(),
            });
        }
        let sales: u64 = raw_sales
            .parse()
            .map_err(|_| parse_error(line, format!("invalid sales `{raw_sales}`")))?;
        let c = catalogs.intern_community(community);
        let a = catalogs.intern_attribute(attribute);
        span = Some(match span {
            None => (month, month),
            Some((lo, hi)) => (lo.min(month), hi.max(month)),
        });
        records.push(InteractionRecord {
            month,
            community: c,
            attribute: a,
            sales,
        });
    }
    Dataset::from_records(catalogs, records, span)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<Dataset> {
        ingest(text.as_bytes())
    }

    #[test]
    fn duplicates_are_summed() {
        let d = parse("month,community,attribute,sales\n1,c1,a1,3\n1,c1,a1,2\n").unwrap();
        assert_eq!(d.records().len(), 1);
        assert_eq!(d.records()[0].sales, 5);
    }

    #[test]
    fn empty_file_is_empty_dataset() {
        let d = parse("").unwrap();
        assert_eq!(d.num_communities(), 0);
        assert_eq!(d.num_attributes(), 0);
        assert!(d.records().is_empty());
        assert_eq!(d.month_range(), None);
        let d = parse("month,community,attribute,sales\n").unwrap();
        assert!(d.records().is_empty());
    }

    #[test]
    fn negative_sales_reports_line() {
        let err = parse("month,community,attribute,sales\n1,c1,a1,4\n1,c1,a1,-2\n").unwrap_err();
        assert!(matches!(err, Error::NegativeSales { line: 3, .. }), "{err}");
    }

    #[test]
    fn unknown_and_missing_columns() {
        assert!(matches!(
            parse("month,community,attribute,sales,price\n"),
            Err(Error::UnknownColumn(c)) if c == "price"
        ));
        assert!(matches!(parse("month,community,sales\n"), Err(Error::MissingColumn(c)) if c == "attribute"));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse("month,community,attribute,sales\n1,c,a,1\nx,c,a,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse("month,community,attribute,sales\n1,c,a\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn columns_may_be_reordered() {
        let d = parse("sales,attribute,month,community\n7,a,2,c\n").unwrap();
        assert_eq!(d.records()[0], InteractionRecord { month: 2, community: 0, attribute: 0, sales: 7 });
    }

    #[test]
    fn records_sorted_and_catalogs_in_appearance_order() {
        let d = parse("month,community,attribute,sales\n2,c2,a2,1\n1,c1,a1,1\n1,c2,a1,1\n").unwrap();
        assert_eq!(d.catalogs().communities(), &["c2", "c1"]);
        assert_eq!(d.catalogs().attributes(), &["a2", "a1"]);
        let keys: Vec<_> = d.records().iter().map(|r| (r.month, r.community, r.attribute)).collect();
        assert_eq!(keys, vec![(1, 0, 1), (1, 1, 1), (2, 0, 0)]);
        assert_eq!(d.month_range(), Some((1, 2)));
    }

    #[test]
    fn zero_sales_rows_leave_no_edge() {
        let d = parse("month,community,attribute,sales\n1,c,a,0\n3,c,b,2\n").unwrap();
        assert_eq!(d.records().len(), 1);
        assert_eq!(d.num_attributes(), 2);
        assert_eq!(d.month_range(), Some((1, 3)));
        assert!(d.records_in(2).is_empty());
    }

    #[test]
    fn min_sales_filter() {
        let text = "month,community,attribute,sales\n\
                    1,c1,keep,5\n1,c1,low,500\n1,c1,gone,9\n\
                    2,c1,keep,60\n2,c2,keep,40\n2,c1,low,99\n";
        let d = parse(text).unwrap();
        let id = d.filter_min_sales(0, 2).unwrap();
        assert_eq!(id, d);

        let f = d.filter_min_sales(100, 2).unwrap();
        assert_eq!(f.catalogs().attributes(), &["keep"]);
        assert!(f.records().iter().all(|r| r.attribute == 0));
        assert_eq!(f.records().len(), 3);
        assert!(matches!(d.filter_min_sales(1, 9), Err(Error::MissingMonth(9))));
    }

    #[test]
    fn csv_round_trip() {
        let d = parse("month,community,attribute,sales\n1,c1,a1,3\n2,c2,a1,4\n").unwrap();
        let mut out = Vec::new();
        d.write_csv(&mut out).unwrap();
        assert_eq!(parse(std::str::from_utf8(&out).unwrap()).unwrap(), d);
    }
}
