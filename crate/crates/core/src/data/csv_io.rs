use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;

use super::{DataError, LakeDataset, DEPTH_COLUMN, GLM_COLUMN};

const DATE_COLUMN: &str = "date";
const TEMPERATURE_COLUMN: &str = "temperature";
const DATE_FORMAT: &str = "%Y-%m-%d";

/// Column layout: `date,depth_m,<required...>,<optional present...>,temperature`.
///
/// The dataset's feature vector is `depth_m` followed by the feature columns
/// in header order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub required: Vec<String>,
    pub optional: Vec<String>,
}

impl CsvSchema {
    pub fn standard() -> Self {
        let required = [
            "day_of_year",
            "air_temp",
            "shortwave",
            "longwave",
            "rel_humidity",
            "wind_speed",
            "rain",
            "growing_degree_days",
            "frozen",
            "snowing",
        ];
        Self {
            required: required.iter().map(|s| s.to_string()).collect(),
            optional: vec![GLM_COLUMN.to_string()],
        }
    }

    /// Validates a header and returns the feature columns it carries.
    fn resolve(&self, header: &csv::StringRecord) -> Result<Vec<String>, DataError> {
        let cols: Vec<&str> = header.iter().map(str::trim).collect();
        let expect = |i: usize, name: &str| -> Result<(), DataError> {
            match cols.get(i) {
                Some(&c) if c == name => Ok(()),
                Some(&c) if !self.knows(c) => Err(DataError::UnknownColumn(c.to_string())),
                _ => Err(DataError::MissingColumn(name.to_string())),
            }
        };
        expect(0, DATE_COLUMN)?;
        expect(1, DEPTH_COLUMN)?;
        if cols.last() != Some(&TEMPERATURE_COLUMN) {
            return Err(DataError::MissingColumn(TEMPERATURE_COLUMN.into()));
        }
        let middle = &cols[2..cols.len() - 1];
        for c in middle {
            if !self.knows(c) {
                return Err(DataError::UnknownColumn(c.to_string()));
            }
        }
        for (i, name) in self.required.iter().enumerate() {
            if middle.get(i) != Some(&name.as_str()) {
                return Err(DataError::MissingColumn(name.clone()));
            }
        }
        let rest = &middle[self.required.len()..];
        let mut expected_opt = self.optional.iter().filter(|o| rest.contains(&o.as_str()));
        for c in rest {
            if expected_opt.next().map(String::as_str) != Some(*c) {
                return Err(DataError::UnknownColumn(c.to_string()));
            }
        }
        Ok(middle.iter().map(|s| s.to_string()).collect())
    }

    fn knows(&self, c: &str) -> bool {
        c == DATE_COLUMN
            || c == DEPTH_COLUMN
            || c == TEMPERATURE_COLUMN
            || self.required.iter().any(|r| r == c)
            || self.optional.iter().any(|o| o == c)
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LakeDataset, DataError> {
    read_csv(std::fs::File::open(path)?, schema)
}

struct DateGroup {
    date: NaiveDate,
    depths: Vec<f64>,
    first_line: u64,
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LakeDataset, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let columns = schema.resolve(&header)?;
    let n_cols = header.len();
    let mut feature_names = vec![DEPTH_COLUMN.to_string()];
    feature_names.extend(columns.iter().cloned());

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut grid: Option<Vec<f64>> = None;
    let mut features = Vec::new();
    let mut temperature = Vec::new();
    let mut group: Option<DateGroup> = None;

    let parse = |line: u64, col: &str, s: &str| -> Result<f64, DataError> {
        s.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| DataError::MalformedRow {
                line,
                column: col.to_string(),
                value: s.to_string(),
            })
    };

    let close_group = |g: DateGroup, grid: &mut Option<Vec<f64>>| -> Result<(), DataError> {
        match grid {
            None => *grid = Some(g.depths),
            Some(existing) if *existing != g.depths => {
                return Err(DataError::DepthGrid {
                    line: g.first_line,
                    detail: format!(
                        "date {} does not use the depth grid of the first date",
                        g.date
                    ),
                })
            }
            Some(_) => {}
        }
        Ok(())
    };

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != n_cols {
            return Err(DataError::FieldCount {
                line,
                expected: n_cols,
                found: record.len(),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], DATE_FORMAT).map_err(|_| {
            DataError::MalformedRow {
                line,
                column: DATE_COLUMN.into(),
                value: record[0].to_string(),
            }
        })?;
        let depth = parse(line, DEPTH_COLUMN, &record[1])?;
        if depth < 0.0 {
            return Err(DataError::DepthGrid {
                line,
                detail: format!("negative depth {depth}"),
            });
        }
        match &mut group {
            Some(g) if g.date == date => {
                if depth <= *g.depths.last().unwrap() {
                    return Err(DataError::DepthGrid {
                        line,
                        detail: "depths within a date must be strictly increasing".into(),
                    });
                }
                g.depths.push(depth);
            }
            Some(g) if date < g.date => return Err(DataError::DateOrder { line }),
            _ => {
                if let Some(prev) = group.take() {
                    close_group(prev, &mut grid)?;
                }
                dates.push(date);
                group = Some(DateGroup {
                    date,
                    depths: vec![depth],
                    first_line: line,
                });
            }
        }
        features.push(depth);
        for (i, name) in columns.iter().enumerate() {
            features.push(parse(line, name, &record[2 + i])?);
        }
        let t = &record[n_cols - 1];
        let y = if t.is_empty() {
            None
        } else {
            let y = parse(line, TEMPERATURE_COLUMN, t)?;
            if crate::physics::density_from_temperature(y).is_err() {
                return Err(DataError::TemperatureDomain { line, value: y });
            }
            Some(y)
        };
        temperature.push(y);
    }
    if let Some(g) = group.take() {
        close_group(g, &mut grid)?;
    }
    let grid = grid.ok_or(DataError::Empty)?;

    let ds = LakeDataset::from_grid(feature_names, dates, grid, features, temperature)?;
    for t in 0..ds.n_dates() {
        for &f in &ds.date_level_features() {
            let v = ds.features(t, 0)[f];
            if (1..ds.n_depths()).any(|d| ds.features(t, d)[f] != v) {
                return Err(DataError::FeatureNotConstant {
                    date: ds.dates()[t],
                    column: ds.feature_names()[f].clone(),
                });
            }
        }
    }
    Ok(ds)
}

/// Writes the raw dataset. Floats use the shortest round-trip representation,
/// so identical datasets always produce identical bytes.
pub fn write_csv<W: Write>(dataset: &LakeDataset, out: W) -> Result<(), DataError> {
    let mut w = csv::WriterBuilder::new().from_writer(out);
    let mut header = vec![DATE_COLUMN.to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    header.push(TEMPERATURE_COLUMN.to_string());
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..dataset.n_dates() {
        for d in 0..dataset.n_depths() {
            row.clear();
            row.push(dataset.dates()[t].format(DATE_FORMAT).to_string());
            row.extend(dataset.features(t, d).iter().map(|v| format!("{v}")));
            row.push(
                dataset
                    .temperature(t, d)
                    .map(|y| format!("{y}"))
                    .unwrap_or_default(),
            );
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "date,depth_m,day_of_year,air_temp,shortwave,longwave,rel_humidity,wind_speed,rain,growing_degree_days,frozen,snowing,temperature\n";

    fn row(date: &str, depth: f64, air: &str, temp: &str) -> String {
        format!("{date},{depth},100,{air},200,300,70,3,0,10,0,0,{temp}\n")
    }

    #[test]
    fn three_rows() {
        let text = format!(
            "{HEADER}{}{}{}",
            row("2010-04-10", 0.0, "5", "8.5"),
            row("2010-04-10", 1.0, "5", "7.0"),
            row("2010-04-10", 2.0, "5", "6.0")
        );
        let ds = read_csv(text.as_bytes(), &CsvSchema::standard()).unwrap();
        assert_eq!(ds.n_dates() * ds.n_depths(), 3);
        assert_eq!(ds.observation_count(), 3);
        assert_eq!(ds.n_features(), 11);
        assert_eq!(ds.feature_names()[0], "depth_m");
        assert_eq!(ds.features(0, 2)[0], 2.0);
        let z = ds.density(0, 1).unwrap();
        assert!((z - crate::physics::density_from_temperature(7.0).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn empty_temperature_is_masked() {
        let text = format!(
            "{HEADER}{}{}",
            row("2010-04-10", 0.0, "5", ""),
            row("2010-04-10", 1.0, "5", "7.0")
        );
        let ds = read_csv(text.as_bytes(), &CsvSchema::standard()).unwrap();
        assert!(!ds.is_observed(0, 0));
        assert_eq!(ds.temperature(0, 0), None);
        assert_eq!(ds.density(0, 0), None);
        assert_eq!(ds.features(0, 0)[2], 5.0);
    }

    #[test]
    fn text_in_numeric_column_names_row() {
        let text = format!(
            "{HEADER}{}{}",
            row("2010-04-10", 0.0, "5", "8"),
            row("2010-04-10", 1.0, "warm", "7.0")
        );
        match read_csv(text.as_bytes(), &CsvSchema::standard()) {
            Err(DataError::MalformedRow { line, column, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(column, "air_temp");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_and_missing_columns() {
        let bad = HEADER.replace("rain", "hail");
        let text = format!("{bad}{}", row("2010-04-10", 0.0, "5", "8"));
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::standard()),
            Err(DataError::UnknownColumn(c)) if c == "hail"
        ));
        let text = "date,depth_m,temperature\n";
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::standard()),
            Err(DataError::MissingColumn(_))
        ));
    }

    #[test]
    fn optional_simulator_column() {
        let header = HEADER.replace(",temperature", ",glm_temperature,temperature");
        let text = format!("{header}2010-04-10,0,100,5,200,300,70,3,0,10,0,0,7.9,8\n");
        let ds = read_csv(text.as_bytes(), &CsvSchema::standard()).unwrap();
        assert_eq!(ds.feature_names().last().unwrap(), "glm_temperature");
        assert_eq!(ds.date_level_features().len(), 10);
    }

    #[test]
    fn non_monotone_depth_grid() {
        let text = format!(
            "{HEADER}{}{}",
            row("2010-04-10", 1.0, "5", "8"),
            row("2010-04-10", 0.5, "5", "7")
        );
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::standard()),
            Err(DataError::DepthGrid { line: 3, .. })
        ));
        let text = format!(
            "{HEADER}{}{}{}",
            row("2010-04-10", 0.0, "5", "8"),
            row("2010-04-10", 1.0, "5", "7"),
            row("2010-04-11", 0.0, "5", "7")
        );
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::standard()),
            Err(DataError::DepthGrid { .. })
        ));
    }

    #[test]
    fn date_level_feature_must_not_vary_with_depth() {
        let text = format!(
            "{HEADER}{}{}",
            row("2010-04-10", 0.0, "5", "8"),
            row("2010-04-10", 1.0, "6", "7")
        );
        assert!(matches!(
            read_csv(text.as_bytes(), &CsvSchema::standard()),
            Err(DataError::FeatureNotConstant { .. })
        ));
    }

    #[test]
    fn write_then_read_round_trips() {
        let text = format!(
            "{HEADER}{}{}{}{}",
            row("2010-04-10", 0.0, "5.125", "8.3"),
            row("2010-04-10", 1.5, "5.125", ""),
            row("2010-04-11", 0.0, "-1e-3", "4.1"),
            row("2010-04-11", 1.5, "-1e-3", "4.0")
        );
        let ds = read_csv(text.as_bytes(), &CsvSchema::standard()).unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(&buf[..], &CsvSchema::standard()).unwrap();
        assert_eq!(back, ds);
    }
}
