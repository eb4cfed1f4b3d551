//! Read-only traversal of table references in a query, including those
//! nested in subqueries, CTEs and CHANGES sources.

use std::collections::BTreeSet;

use super::ast::*;

/// Calls `f` on every table factor with a flag telling whether it sits
/// under a FINAL.
pub fn visit_factors(q: &Query, f: &mut dyn FnMut(&TableFactor, bool)) {
    query(q, false, f);
}

fn query(q: &Query, fin: bool, f: &mut dyn FnMut(&TableFactor, bool)) {
    for c in &q.with {
        query(&c.query, fin, f);
    }
    set_expr(&q.body, fin, f);
    for o in &q.order_by {
        expr(&o.expr, fin, f);
    }
}

fn set_expr(s: &SetExpr, fin: bool, f: &mut dyn FnMut(&TableFactor, bool)) {
    match s {
        SetExpr::Select(sel) => {
            for item in &sel.items {
                if let SelectItem::Expr { expr: e, .. } = item {
                    expr(e, fin, f);
                }
            }
            for r in &sel.from {
                table_ref(r, fin, f);
            }
            for e in sel.selection.iter().chain(&sel.finalize).chain(&sel.group_by).chain(&sel.having) {
                expr(e, fin, f);
            }
        }
        SetExpr::Values(rows) => rows.iter().flatten().for_each(|e| expr(e, fin, f)),
        SetExpr::Query(q) => query(q, fin, f),
        SetExpr::Final(q) => query(q, true, f),
        SetExpr::SetOp { left, right, .. } => {
            set_expr(left, fin, f);
            set_expr(right, fin, f);
        }
    }
}

fn table_ref(r: &TableRef, fin: bool, f: &mut dyn FnMut(&TableFactor, bool)) {
    factor(&r.factor, fin, f);
    for j in &r.joins {
        factor(&j.factor, fin, f);
        if let Some(on) = &j.on {
            expr(on, fin, f);
        }
    }
}

fn factor(t: &TableFactor, fin: bool, f: &mut dyn FnMut(&TableFactor, bool)) {
    f(t, fin);
    match &t.kind {
        FactorKind::Derived(q) => query(q, fin, f),
        FactorKind::Changes(c) => {
            if let ChangesSource::Query(q) = &c.source {
                query(q, fin, f);
            }
        }
        FactorKind::Function { args, .. } => args.iter().for_each(|e| expr(e, fin, f)),
        FactorKind::Nested(list) => list.iter().for_each(|r| table_ref(r, fin, f)),
        FactorKind::Table(_) => {}
    }
}

fn expr(e: &Expr, fin: bool, f: &mut dyn FnMut(&TableFactor, bool)) {
    match e {
        Expr::Exists { query: q, .. } | Expr::Subquery(q) => query(q, fin, f),
        _ => e.children().into_iter().for_each(|c| expr(c, fin, f)),
    }
}

/// Lower-cased names of the base tables a query reads.
pub fn base_tables(q: &Query) -> BTreeSet<String> {
    let mut ctes = BTreeSet::new();
    collect_ctes(q, &mut ctes);
    let mut out = BTreeSet::new();
    visit_factors(q, &mut |t, _| {
        let name = match &t.kind {
            FactorKind::Table(n) => n,
            FactorKind::Changes(c) => match &c.source {
                ChangesSource::Table(n) => n,
                ChangesSource::Query(_) => return,
            },
            _ => return,
        };
        let key = name.to_ascii_lowercase();
        if !ctes.contains(&key) {
            out.insert(key);
        }
    });
    out
}

fn collect_ctes(q: &Query, out: &mut BTreeSet<String>) {
    for c in &q.with {
        out.insert(c.name.to_ascii_lowercase());
        collect_ctes(&c.query, out);
    }
    visit_factors(q, &mut |t, _| {
        if let FactorKind::Derived(d) = &t.kind {
            collect_ctes(d, out);
        }
    });
}

/// Whether the query has a CHANGES without a start bound outside FINAL.
pub fn has_unranged_changes(q: &Query) -> bool {
    let mut found = false;
    visit_factors(q, &mut |t, fin| {
        if let FactorKind::Changes(c) = &t.kind {
            if c.start.is_none() && !fin {
                found = true;
            }
        }
    });
    found
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sql::parse_query;

    #[test]
    fn finds_tables_through_subqueries_and_changes() {
        let q = parse_query(
            "WITH c AS (SELECT * FROM a) SELECT * FROM c, CHANGES(b) WHERE EXISTS (SELECT 1 FROM d)",
        )
        .unwrap();
        let got: Vec<String> = base_tables(&q).into_iter().collect();
        assert_eq!(got, ["a", "b", "d"]);
        assert!(has_unranged_changes(&q));
    }

    #[test]
    fn changes_under_final_is_not_unranged() {
        let q = parse_query("SELECT * FROM (FINAL(SELECT * FROM CHANGES(t)))").unwrap();
        assert!(!has_unranged_changes(&q));
    }
}
