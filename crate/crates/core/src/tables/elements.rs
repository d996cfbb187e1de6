use std::collections::BTreeSet;

use super::WebTable;

/// Topic, subject and body entities of one table.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TableElements {
    pub topic: Option<String>,
    pub subject_column: Option<usize>,
    pub subject_entities: BTreeSet<String>,
    pub body_columns: BTreeSet<usize>,
    pub body_entities: BTreeSet<String>,
    pub ne_columns: BTreeSet<usize>,
}

/// Named-entity columns: at least one linked cell, and linked cells make up
/// at least `ne_threshold` of the column's nonempty cells.
pub fn classify_columns(table: &WebTable, ne_threshold: f64) -> BTreeSet<usize> {
    (0..table.n_cols())
        .filter(|&c| {
            let (mut linked, mut nonempty) = (0usize, 0usize);
            for row in &table.rows {
                let cell = &row[c];
                if !cell.is_empty() {
                    nonempty += 1;
                    if cell.entity_id.is_some() {
                        linked += 1;
                    }
                }
            }
            linked > 0 && linked as f64 >= ne_threshold * nonempty as f64
        })
        .collect()
}

/// The leftmost NE-column is the subject column; every other NE-column is a
/// body column. The topic entity is the page entity.
pub fn extract_elements(table: &WebTable, ne_threshold: f64) -> TableElements {
    let ne_columns = classify_columns(table, ne_threshold);
    let subject_column = ne_columns.iter().next().copied();
    let body_columns: BTreeSet<usize> = ne_columns
        .iter()
        .copied()
        .filter(|&c| Some(c) != subject_column)
        .collect();
    let entities_in = |cols: &mut dyn Iterator<Item = usize>| -> BTreeSet<String> {
        let cols: Vec<usize> = cols.collect();
        table
            .rows
            .iter()
            .flat_map(|row| cols.iter().filter_map(|&c| row[c].entity_id.clone()))
            .collect()
    };
    TableElements {
        topic: table.page_entity_id.clone(),
        subject_column,
        subject_entities: entities_in(&mut subject_column.into_iter()),
        body_entities: entities_in(&mut body_columns.iter().copied()),
        body_columns,
        ne_columns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tables::Cell;

    fn column_table(col: Vec<Cell>) -> WebTable {
        WebTable::new("t", None, col.into_iter().map(|c| vec![c]).collect()).unwrap()
    }

    #[test]
    fn all_linked_and_none_linked() {
        let linked = column_table(vec![Cell::linked("a", "A"), Cell::linked("b", "B")]);
        assert_eq!(classify_columns(&linked, 0.5), BTreeSet::from([0]));
        let plain = column_table(vec![Cell::plain("a"), Cell::plain("b")]);
        assert!(classify_columns(&plain, 0.0).is_empty());
    }

    #[test]
    fn ratio_threshold_boundary() {
        let t = column_table(vec![
            Cell::linked("a", "A"),
            Cell::plain("x"),
            Cell::linked("b", "B"),
            Cell::plain("y"),
        ]);
        // 2 linked out of 4 nonempty = 0.5
        assert_eq!(classify_columns(&t, 0.5), BTreeSet::from([0]));
        assert!(classify_columns(&t, 0.6).is_empty());
    }

    #[test]
    fn empty_cells_do_not_count() {
        let t = column_table(vec![Cell::linked("a", "A"), Cell::plain(""), Cell::plain("  ")]);
        assert_eq!(classify_columns(&t, 1.0), BTreeSet::from([0]));
    }

    #[test]
    fn no_ne_columns_gives_empty_elements() {
        let t = WebTable::new("t", Some("P".into()), vec![vec![Cell::plain("1"), Cell::plain("2")]]).unwrap();
        let e = extract_elements(&t, 0.5);
        assert_eq!(e.subject_column, None);
        assert!(e.subject_entities.is_empty() && e.body_entities.is_empty());
        assert_eq!(e.topic.as_deref(), Some("P"));
    }

    #[test]
    fn leftmost_ne_column_is_subject() {
        let t = WebTable::new(
            "t",
            None,
            vec![
                vec![Cell::plain("1990"), Cell::linked("a", "A"), Cell::linked("x", "X")],
                vec![Cell::plain("1991"), Cell::linked("b", "B"), Cell::linked("y", "Y")],
            ],
        )
        .unwrap();
        let e = extract_elements(&t, 0.5);
        assert_eq!(e.subject_column, Some(1));
        assert_eq!(e.body_columns, BTreeSet::from([2]));
        assert_eq!(e.subject_entities, BTreeSet::from(["A".into(), "B".into()]));
        assert_eq!(e.body_entities, BTreeSet::from(["X".into(), "Y".into()]));
    }

    #[test]
    fn award_winners_table() {
        // Shape of an award page: year, winner, high school, city.
        let row = |y: &str, p: &str, s: &str, c: &str| {
            vec![Cell::plain(y), Cell::linked(p, p), Cell::linked(s, s), Cell::linked(c, c)]
        };
        let t = WebTable::new(
            "mr_basketball",
            Some("Mr._Basketball_USA".into()),
            vec![
                row("2009", "Player_A", "School_A", "City_A"),
                row("2010", "Player_B", "School_B", "City_B"),
                row("2011", "Player_C", "School_C", "City_C"),
            ],
        )
        .unwrap();
        let e = extract_elements(&t, 0.5);
        assert_eq!(e.topic.as_deref(), Some("Mr._Basketball_USA"));
        assert_eq!(e.subject_column, Some(1));
        assert_eq!(
            e.subject_entities,
            BTreeSet::from(["Player_A".into(), "Player_B".into(), "Player_C".into()])
        );
        assert_eq!(e.body_columns, BTreeSet::from([2, 3]));
        assert_eq!(e.body_entities.len(), 6);
    }
}
