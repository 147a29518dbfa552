//! Ordered rooted trees whose nodes carry a type in `1..=theta`.
//!
//! Text format: `t` for a leaf of type `t`, `t(c1,c2,...)` for an internal
//! node with its children in order, e.g. `1(2,1(2))`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A node type, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeId(u32);

impl TypeId {
    pub fn new(value: u32) -> Result<Self> {
        if value == 0 {
            return Err(Error::domain("type ids start at 1"));
        }
        Ok(TypeId(value))
    }

    /// Type from a 0-based index.
    pub fn from_index(index: usize) -> Self {
        TypeId(index as u32 + 1)
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    /// All types of a model with `theta` types.
    pub fn all(theta: usize) -> impl Iterator<Item = TypeId> {
        (0..theta).map(TypeId::from_index)
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Number of children of each type, indexed by `TypeId::index`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TypeCountVector(pub Vec<u32>);

impl TypeCountVector {
    pub fn zeros(theta: usize) -> Self {
        TypeCountVector(vec![0; theta])
    }

    pub fn total(&self) -> u64 {
        self.0.iter().map(|&c| u64::from(c)).sum()
    }

    pub fn get(&self, t: TypeId) -> u32 {
        self.0[t.index()]
    }

    pub fn theta(&self) -> usize {
        self.0.len()
    }

    /// The children types in nondecreasing order, one entry per child.
    pub fn expand(&self) -> Vec<TypeId> {
        let mut out = Vec::with_capacity(self.total() as usize);
        for (j, &c) in self.0.iter().enumerate() {
            out.extend(std::iter::repeat_n(TypeId::from_index(j), c as usize));
        }
        out
    }
}

impl fmt::Display for TypeCountVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (j, c) in self.0.iter().enumerate() {
            if j > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TypedTree {
    pub ty: TypeId,
    pub children: Vec<TypedTree>,
}

impl TypedTree {
    pub fn leaf(ty: TypeId) -> Self {
        TypedTree {
            ty,
            children: Vec::new(),
        }
    }

    pub fn node(ty: TypeId, children: Vec<TypedTree>) -> Self {
        TypedTree { ty, children }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// 0 for a leaf, otherwise one more than the highest child.
    pub fn height(&self) -> usize {
        self.children
            .iter()
            .map(|c| c.height() + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(|c| c.node_count()).sum::<usize>()
    }

    /// Number of nodes at each depth, from the root (depth 0) down.
    pub fn generation_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::new();
        let mut frontier = vec![self];
        while !frontier.is_empty() {
            sizes.push(frontier.len());
            frontier = frontier.iter().flat_map(|n| n.children.iter()).collect();
        }
        sizes
    }

    /// Per-depth node counts split by type: `out[d][t.index()]`.
    pub fn generation_type_counts(&self, theta: usize) -> Vec<Vec<usize>> {
        let mut out = Vec::new();
        let mut frontier = vec![self];
        while !frontier.is_empty() {
            let mut row = vec![0; theta];
            for n in &frontier {
                row[n.ty.index()] += 1;
            }
            out.push(row);
            frontier = frontier.iter().flat_map(|n| n.children.iter()).collect();
        }
        out
    }

    /// Largest type id appearing anywhere in the tree.
    pub fn max_type(&self) -> TypeId {
        self.children
            .iter()
            .map(|c| c.max_type())
            .fold(self.ty, std::cmp::max)
    }

    /// Writes the tree with a class label on every node: `t:i(...)`.
    /// `classes` is in preorder, as produced by `RecursivePartition::classify_preorder`.
    pub fn to_annotated_string(&self, classes: &[crate::events::ClassId]) -> String {
        fn go(
            t: &TypedTree,
            classes: &[crate::events::ClassId],
            pos: &mut usize,
            out: &mut String,
        ) {
            out.push_str(&format!("{}:{}", t.ty, classes[*pos]));
            *pos += 1;
            if !t.children.is_empty() {
                out.push('(');
                for (n, c) in t.children.iter().enumerate() {
                    if n > 0 {
                        out.push(',');
                    }
                    go(c, classes, pos, out);
                }
                out.push(')');
            }
        }
        let mut out = String::new();
        let mut pos = 0;
        go(self, classes, &mut pos, &mut out);
        out
    }
}

/// Child-type counter of the root.
pub fn count_children(tree: &TypedTree, theta: usize) -> Result<TypeCountVector> {
    let mut counts = TypeCountVector::zeros(theta);
    for c in &tree.children {
        let idx = c.ty.index();
        if idx >= theta {
            return Err(Error::domain(format!(
                "child type {} exceeds theta = {theta}",
                c.ty
            )));
        }
        counts.0[idx] += 1;
    }
    Ok(counts)
}

impl fmt::Display for TypedTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.ty)?;
        if !self.children.is_empty() {
            write!(f, "(")?;
            for (n, c) in self.children.iter().enumerate() {
                if n > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{c}")?;
            }
            write!(f, ")")?;
        }
        Ok(())
    }
}

impl FromStr for TypedTree {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let mut pos = 0;
        let tree = parse_node(bytes, &mut pos)?;
        if pos != bytes.len() {
            return Err(Error::TreeSyntax {
                offset: pos,
                message: "trailing input".into(),
            });
        }
        Ok(tree)
    }
}

fn parse_node(bytes: &[u8], pos: &mut usize) -> Result<TypedTree> {
    let start = *pos;
    while *pos < bytes.len() && bytes[*pos].is_ascii_digit() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::TreeSyntax {
            offset: start,
            message: "expected a type number".into(),
        });
    }
    let value: u32 = std::str::from_utf8(&bytes[start..*pos])
        .expect("ascii digits")
        .parse()
        .map_err(|_| Error::TreeSyntax {
            offset: start,
            message: "type number out of range".into(),
        })?;
    let ty = TypeId::new(value).map_err(|_| Error::TreeSyntax {
        offset: start,
        message: "type 0 is not allowed".into(),
    })?;
    let mut children = Vec::new();
    if *pos < bytes.len() && bytes[*pos] == b'(' {
        *pos += 1;
        loop {
            children.push(parse_node(bytes, pos)?);
            match bytes.get(*pos) {
                Some(b',') => *pos += 1,
                Some(b')') => {
                    *pos += 1;
                    break;
                }
                _ => {
                    return Err(Error::TreeSyntax {
                        offset: *pos,
                        message: "expected ',' or ')'".into(),
                    })
                }
            }
        }
    }
    Ok(TypedTree { ty, children })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: &str) -> TypedTree {
        s.parse().unwrap()
    }

    #[test]
    fn counts_children_by_type() {
        assert_eq!(count_children(&t("1"), 2).unwrap().0, vec![0, 0]);
        assert_eq!(count_children(&t("1(1,2,1)"), 2).unwrap().0, vec![2, 1]);
        assert_eq!(count_children(&t("1(2,2,2)"), 2).unwrap().0, vec![0, 3]);
        assert!(count_children(&t("1(3)"), 2).is_err());
    }

    #[test]
    fn heights() {
        assert_eq!(t("1").height(), 0);
        assert_eq!(t("1(1)").height(), 1);
        assert_eq!(t("1(1(1(1)))").height(), 3);
        assert_eq!(t("1(2,1(2))").height(), 2);
    }

    #[test]
    fn generation_sizes_count_each_depth() {
        assert_eq!(t("1(2,1(2,2),1)").generation_sizes(), vec![1, 3, 2]);
        assert_eq!(
            t("2(1,2(1))").generation_type_counts(2),
            vec![vec![0, 1], vec![1, 1], vec![1, 0]]
        );
    }

    #[test]
    fn text_format_is_exact() {
        let tree = TypedTree::node(
            TypeId::new(1).unwrap(),
            vec![
                TypedTree::leaf(TypeId::new(2).unwrap()),
                TypedTree::node(
                    TypeId::new(1).unwrap(),
                    vec![TypedTree::leaf(TypeId::new(2).unwrap())],
                ),
            ],
        );
        assert_eq!(tree.to_string(), "1(2,1(2))");
        assert_eq!(t("1(2,1(2))"), tree);
    }

    #[test]
    fn rejects_malformed_text() {
        for bad in ["", "0", "1(", "1()", "1(2", "1,2", "(1)", "1(2)x", "a"] {
            assert!(bad.parse::<TypedTree>().is_err(), "{bad:?} should not parse");
        }
    }

    #[test]
    fn child_order_matters() {
        assert_ne!(t("1(1,2)"), t("1(2,1)"));
    }

    fn arb_tree() -> impl Strategy<Value = TypedTree> {
        let leaf = (1u32..4).prop_map(|v| TypedTree::leaf(TypeId::new(v).unwrap()));
        leaf.prop_recursive(4, 40, 4, |inner| {
            ((1u32..4), prop::collection::vec(inner, 0..4))
                .prop_map(|(v, ch)| TypedTree::node(TypeId::new(v).unwrap(), ch))
        })
    }

    proptest! {
        #[test]
        fn text_round_trip(tree in arb_tree()) {
            let text = tree.to_string();
            prop_assert_eq!(text.parse::<TypedTree>().unwrap(), tree);
        }

        #[test]
        fn child_count_matches_vector_total(tree in arb_tree()) {
            let n = count_children(&tree, 3).unwrap();
            prop_assert_eq!(n.total() as usize, tree.children.len());
        }
    }
}
