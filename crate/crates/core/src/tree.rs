//! Ranked alphabets and finite ordered trees over them.
//!
//! Trees are stored recursively. Gorn addresses are computed on demand and
//! are always 1-based when printed or accepted from callers: the root is the
//! empty address `ε`, its first child is `1`, the second child of that child
//! is `1.2`, and so on.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// Name of the distinguished continuous-parameter marker.
pub const CONST_MARKER: &str = "c#";
/// Name of the distinguished discrete-parameter marker.
pub const DISC_MARKER: &str = "d#";
/// Reserved rank-0 symbol marking the hole of a context.
pub const HOLE: &str = "?";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("address {0} is present but its parent is not")]
    NotPrefixClosed(Address),
    #[error("symbol `{symbol}` at {address} has rank {rank} but {children} children")]
    ArityMismatch {
        address: Address,
        symbol: String,
        rank: usize,
        children: usize,
    },
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),
    #[error("empty tree")]
    Empty,
    #[error("invalid symbol `{name}`: {reason}")]
    InvalidSymbol { name: String, reason: &'static str },
    #[error("syntax error at offset {offset}: {message}")]
    Syntax { offset: usize, message: String },
}

/// A symbol with a fixed number of children.
///
/// Distinct arities of the same operator are distinct symbols; the
/// convention is to name the extra ones `base/k` (e.g. `+/3` next to a
/// binary `+`). [`RankedSymbol::base_name`] strips that suffix.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RankedSymbol {
    name: Arc<str>,
    rank: usize,
}

impl RankedSymbol {
    pub fn new(name: impl Into<Arc<str>>, rank: usize) -> Self {
        RankedSymbol {
            name: name.into(),
            rank,
        }
    }

    pub fn hole() -> Self {
        RankedSymbol::new(HOLE, 0)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// The operator name without an arity suffix `/rank`.
    pub fn base_name(&self) -> &str {
        if self.rank > 0 {
            if let Some((base, suffix)) = self.name.rsplit_once('/') {
                if !base.is_empty() && suffix.parse::<usize>().ok() == Some(self.rank) {
                    return base;
                }
            }
        }
        &self.name
    }

    /// Rank-0 symbols whose name ends in `#` bind a parameter value.
    pub fn is_marker(&self) -> bool {
        self.rank == 0 && self.name.ends_with('#')
    }

    pub fn is_disc_marker(&self) -> bool {
        self.rank == 0 && &*self.name == DISC_MARKER
    }

    /// Any marker other than the discrete one binds a continuous parameter.
    pub fn is_const_marker(&self) -> bool {
        self.is_marker() && !self.is_disc_marker()
    }

    pub fn is_hole(&self) -> bool {
        self.rank == 0 && &*self.name == HOLE
    }

    /// Value of a numeric-literal leaf such as `1`, `3`, `0.5` or `-2/3`.
    pub fn literal_value(&self) -> Option<f64> {
        if self.rank != 0 {
            return None;
        }
        parse_number(&self.name)
    }

    /// Rank-0 symbols that are neither markers, literals nor the hole are
    /// input variables.
    pub fn is_variable(&self) -> bool {
        self.rank == 0 && !self.is_marker() && !self.is_hole() && self.literal_value().is_none()
    }
}

impl fmt::Debug for RankedSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.name, self.rank)
    }
}

impl fmt::Display for RankedSymbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)
    }
}

/// Parses a decimal (`1`, `-0.25`, `1e3`) or a fraction (`-2/3`).
pub(crate) fn parse_number(text: &str) -> Option<f64> {
    let first = text.chars().next()?;
    if !(first.is_ascii_digit() || first == '-' || first == '+' || first == '.') {
        return None;
    }
    if let Some((num, den)) = text.split_once('/') {
        let n: f64 = num.parse().ok()?;
        let d: f64 = den.parse().ok()?;
        if d == 0.0 {
            return None;
        }
        return Some(n / d);
    }
    let v: f64 = text.parse().ok()?;
    v.is_finite().then_some(v)
}

/// A finite ranked alphabet. Always contains the markers `c#` and `d#`.
#[derive(Clone, PartialEq, Eq)]
pub struct RankedAlphabet {
    symbols: BTreeMap<Arc<str>, RankedSymbol>,
}

impl RankedAlphabet {
    pub fn new(symbols: impl IntoIterator<Item = RankedSymbol>) -> Result<Self, TreeError> {
        let mut map = BTreeMap::new();
        let markers = [
            RankedSymbol::new(CONST_MARKER, 0),
            RankedSymbol::new(DISC_MARKER, 0),
        ];
        for sym in symbols.into_iter().chain(markers) {
            if sym.name.is_empty() {
                return Err(TreeError::InvalidSymbol {
                    name: String::new(),
                    reason: "empty name",
                });
            }
            if sym.is_hole() || (&*sym.name == HOLE) {
                return Err(TreeError::InvalidSymbol {
                    name: sym.name.to_string(),
                    reason: "`?` is reserved for context holes",
                });
            }
            if sym.name.ends_with('#') && sym.rank != 0 {
                return Err(TreeError::InvalidSymbol {
                    name: sym.name.to_string(),
                    reason: "marker symbols must have rank 0",
                });
            }
            match map.get(&sym.name) {
                Some(existing) if existing != &sym => {
                    return Err(TreeError::InvalidSymbol {
                        name: sym.name.to_string(),
                        reason: "declared twice with different ranks",
                    })
                }
                Some(_) => {}
                None => {
                    map.insert(sym.name.clone(), sym);
                }
            }
        }
        Ok(RankedAlphabet { symbols: map })
    }

    pub fn get(&self, name: &str) -> Option<&RankedSymbol> {
        self.symbols.get(name)
    }

    /// Looks up the symbol written `base` with `arity` children: either a
    /// symbol named `base` of that rank, or one named `base/arity`.
    pub fn resolve(&self, base: &str, arity: usize) -> Option<&RankedSymbol> {
        match self.symbols.get(base) {
            Some(sym) if sym.rank == arity => Some(sym),
            _ => self
                .symbols
                .get(format!("{base}/{arity}").as_str())
                .filter(|s| s.rank == arity),
        }
    }

    pub fn contains(&self, symbol: &RankedSymbol) -> bool {
        self.symbols.get(symbol.name()) == Some(symbol)
    }

    /// Symbols in name order.
    pub fn symbols(&self) -> impl Iterator<Item = &RankedSymbol> {
        self.symbols.values()
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn index_of(&self, symbol: &RankedSymbol) -> Option<usize> {
        if !self.contains(symbol) {
            return None;
        }
        self.symbols.keys().position(|k| **k == *symbol.name())
    }

    pub fn const_marker(&self) -> &RankedSymbol {
        &self.symbols[CONST_MARKER]
    }

    pub fn disc_marker(&self) -> &RankedSymbol {
        &self.symbols[DISC_MARKER]
    }

    /// Input-variable symbols, in name order.
    pub fn variables(&self) -> impl Iterator<Item = &RankedSymbol> {
        self.symbols.values().filter(|s| s.is_variable())
    }
}

impl fmt::Debug for RankedAlphabet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.symbols.values()).finish()
    }
}

/// A Gorn address with 1-based child indices.
#[derive(Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Address(Vec<usize>);

impl Address {
    pub fn root() -> Self {
        Address(Vec::new())
    }

    pub fn new(indices: Vec<usize>) -> Self {
        debug_assert!(indices.iter().all(|&i| i >= 1));
        Address(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, index: usize) -> Address {
        let mut v = self.0.clone();
        v.push(index);
        Address(v)
    }

    pub fn parent(&self) -> Option<Address> {
        if self.0.is_empty() {
            None
        } else {
            Some(Address(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// True if `self` is an ancestor of (or equal to) `other`.
    pub fn is_prefix_of(&self, other: &Address) -> bool {
        other.0.starts_with(&self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("ε");
        }
        for (i, idx) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(".")?;
            }
            write!(f, "{idx}")?;
        }
        Ok(())
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Address {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s.is_empty() || s == "ε" {
            return Ok(Address::root());
        }
        s.split('.')
            .map(|part| match part.parse::<usize>() {
                Ok(i) if i >= 1 => Ok(i),
                _ => Err(TreeError::Syntax {
                    offset: 0,
                    message: format!("bad address component `{part}`"),
                }),
            })
            .collect::<Result<Vec<_>, _>>()
            .map(Address)
    }
}

/// A finite ordered tree whose node child counts match their symbol ranks.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Tree {
    symbol: RankedSymbol,
    children: Vec<Tree>,
}

impl Tree {
    pub fn new(symbol: RankedSymbol, children: Vec<Tree>) -> Result<Self, TreeError> {
        if symbol.rank != children.len() {
            return Err(TreeError::ArityMismatch {
                address: Address::root(),
                symbol: symbol.name.to_string(),
                rank: symbol.rank,
                children: children.len(),
            });
        }
        Ok(Tree { symbol, children })
    }

    pub fn leaf(symbol: RankedSymbol) -> Result<Self, TreeError> {
        Tree::new(symbol, Vec::new())
    }

    pub(crate) fn new_unchecked(symbol: RankedSymbol, children: Vec<Tree>) -> Self {
        debug_assert_eq!(symbol.rank, children.len());
        Tree { symbol, children }
    }

    pub fn symbol(&self) -> &RankedSymbol {
        &self.symbol
    }

    pub fn children(&self) -> &[Tree] {
        &self.children
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children.iter().map(Tree::size).sum::<usize>()
    }

    /// Number of nodes on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(Tree::depth).max().unwrap_or(0)
    }

    /// Nodes in pre-order (root, then children left to right).
    pub fn preorder(&self) -> Preorder<'_> {
        Preorder { stack: vec![self] }
    }

    /// `(address, node)` pairs in pre-order.
    pub fn nodes(&self) -> Vec<(Address, &Tree)> {
        let mut out = Vec::with_capacity(self.size());
        fn walk<'a>(t: &'a Tree, addr: Address, out: &mut Vec<(Address, &'a Tree)>) {
            out.push((addr.clone(), t));
            for (i, c) in t.children.iter().enumerate() {
                walk(c, addr.child(i + 1), out);
            }
        }
        walk(self, Address::root(), &mut out);
        out
    }

    pub fn addresses(&self) -> Vec<Address> {
        self.nodes().into_iter().map(|(a, _)| a).collect()
    }

    pub fn subtree(&self, address: &Address) -> Option<&Tree> {
        let mut node = self;
        for &i in address.indices() {
            node = node.children.get(i.checked_sub(1)?)?;
        }
        Some(node)
    }

    /// Copy of `self` with the subtree at `address` replaced.
    pub fn replace_subtree(&self, address: &Address, replacement: Tree) -> Option<Tree> {
        fn go(t: &Tree, path: &[usize], replacement: Tree) -> Option<Tree> {
            match path.split_first() {
                None => Some(replacement),
                Some((&i, rest)) => {
                    let idx = i.checked_sub(1)?;
                    let child = t.children.get(idx)?;
                    let new_child = go(child, rest, replacement)?;
                    let mut children = t.children.clone();
                    children[idx] = new_child;
                    Some(Tree {
                        symbol: t.symbol.clone(),
                        children,
                    })
                }
            }
        }
        go(self, address.indices(), replacement)
    }

    /// Pre-order addresses of all nodes labelled `symbol`.
    pub fn positions_of(&self, symbol: &RankedSymbol) -> Vec<Address> {
        self.nodes()
            .into_iter()
            .filter(|(_, t)| &t.symbol == symbol)
            .map(|(a, _)| a)
            .collect()
    }

    /// Symbols occurring in the tree.
    pub fn symbols(&self) -> BTreeSet<&RankedSymbol> {
        self.preorder().map(|t| &t.symbol).collect()
    }

    /// Parses the parenthesised prefix form, e.g. `(* sT# (+ 1 c))`.
    /// Leaves are bare tokens; `?` denotes a context hole.
    pub fn parse(text: &str, alphabet: &RankedAlphabet) -> Result<Tree, TreeError> {
        let raw = RawTree::parse(text)?;
        raw.resolve(alphabet)
    }

    /// Parses tree text, inferring an alphabet from the tokens and their
    /// child counts. Used when no prior is at hand (e.g. reading a posterior).
    pub fn parse_inferred(text: &str) -> Result<Tree, TreeError> {
        let raw = RawTree::parse(text)?;
        let mut arities: BTreeMap<String, BTreeSet<usize>> = BTreeMap::new();
        raw.collect_arities(&mut arities);
        let mut syms = Vec::new();
        for (name, ranks) in arities {
            if name == HOLE {
                continue;
            }
            let lowest = *ranks.iter().next().expect("non-empty");
            for r in ranks {
                if r == lowest {
                    syms.push(RankedSymbol::new(name.as_str(), r));
                } else {
                    syms.push(RankedSymbol::new(format!("{name}/{r}"), r));
                }
            }
        }
        let alphabet = RankedAlphabet::new(syms)?;
        raw.resolve(&alphabet)
    }
}

impl fmt::Display for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.children.is_empty() {
            return f.write_str(self.symbol.base_name());
        }
        write!(f, "({}", self.symbol.base_name())?;
        for c in &self.children {
            write!(f, " {c}")?;
        }
        f.write_str(")")
    }
}

impl fmt::Debug for Tree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

pub struct Preorder<'a> {
    stack: Vec<&'a Tree>,
}

impl<'a> Iterator for Preorder<'a> {
    type Item = &'a Tree;

    fn next(&mut self) -> Option<&'a Tree> {
        let node = self.stack.pop()?;
        self.stack.extend(node.children.iter().rev());
        Some(node)
    }
}

/// Builds a tree from an address-to-symbol-name map, checking the tree
/// conditions: non-empty, prefix-closed, and child indices exactly `1..=rank`.
pub fn validate_tree(
    candidate: &BTreeMap<Address, String>,
    alphabet: &RankedAlphabet,
) -> Result<Tree, TreeError> {
    if candidate.is_empty() {
        return Err(TreeError::Empty);
    }
    for addr in candidate.keys() {
        if let Some(parent) = addr.parent() {
            if !candidate.contains_key(&parent) {
                return Err(TreeError::NotPrefixClosed(addr.clone()));
            }
        }
    }
    // BTreeMap order on addresses is pre-order.
    for (addr, name) in candidate {
        let sym = alphabet
            .get(name)
            .ok_or_else(|| TreeError::UnknownSymbol(name.clone()))?;
        let mut present = Vec::new();
        let mut i = 1;
        loop {
            if candidate.contains_key(&addr.child(i)) {
                present.push(i);
            }
            // Stop once past both the rank and any listed child.
            if i > sym.rank && !has_child_beyond(candidate, addr, i) {
                break;
            }
            i += 1;
        }
        let expected: Vec<usize> = (1..=sym.rank).collect();
        if present != expected {
            return Err(TreeError::ArityMismatch {
                address: addr.clone(),
                symbol: name.clone(),
                rank: sym.rank,
                children: present.len(),
            });
        }
    }
    fn build(
        addr: &Address,
        candidate: &BTreeMap<Address, String>,
        alphabet: &RankedAlphabet,
    ) -> Tree {
        let sym = alphabet.get(&candidate[addr]).expect("checked").clone();
        let children = (1..=sym.rank)
            .map(|i| build(&addr.child(i), candidate, alphabet))
            .collect();
        Tree::new_unchecked(sym, children)
    }
    Ok(build(&Address::root(), candidate, alphabet))
}

fn has_child_beyond(candidate: &BTreeMap<Address, String>, addr: &Address, i: usize) -> bool {
    candidate
        .keys()
        .any(|k| k.len() == addr.len() + 1 && addr.is_prefix_of(k) && k.indices()[addr.len()] > i)
}

/// Token-level tree before symbols are resolved against an alphabet.
struct RawTree {
    name: String,
    children: Vec<RawTree>,
}

impl RawTree {
    fn parse(text: &str) -> Result<RawTree, TreeError> {
        let bytes: Vec<char> = text.chars().collect();
        let mut pos = 0;
        let tree = Self::parse_at(&bytes, &mut pos)?;
        skip_ws(&bytes, &mut pos);
        if pos != bytes.len() {
            return Err(TreeError::Syntax {
                offset: pos,
                message: "trailing input".into(),
            });
        }
        Ok(tree)
    }

    fn parse_at(chars: &[char], pos: &mut usize) -> Result<RawTree, TreeError> {
        skip_ws(chars, pos);
        match chars.get(*pos) {
            None => Err(TreeError::Syntax {
                offset: *pos,
                message: "unexpected end of input".into(),
            }),
            Some('(') => {
                *pos += 1;
                skip_ws(chars, pos);
                let name = token(chars, pos)?;
                let mut children = Vec::new();
                loop {
                    skip_ws(chars, pos);
                    match chars.get(*pos) {
                        Some(')') => {
                            *pos += 1;
                            break;
                        }
                        None => {
                            return Err(TreeError::Syntax {
                                offset: *pos,
                                message: "unclosed `(`".into(),
                            })
                        }
                        _ => children.push(Self::parse_at(chars, pos)?),
                    }
                }
                if children.is_empty() {
                    return Err(TreeError::Syntax {
                        offset: *pos,
                        message: "leaves are written without parentheses".into(),
                    });
                }
                Ok(RawTree { name, children })
            }
            Some(')') => Err(TreeError::Syntax {
                offset: *pos,
                message: "unexpected `)`".into(),
            }),
            Some(_) => Ok(RawTree {
                name: token(chars, pos)?,
                children: Vec::new(),
            }),
        }
    }

    fn collect_arities(&self, out: &mut BTreeMap<String, BTreeSet<usize>>) {
        out.entry(self.name.clone())
            .or_default()
            .insert(self.children.len());
        for c in &self.children {
            c.collect_arities(out);
        }
    }

    fn resolve(&self, alphabet: &RankedAlphabet) -> Result<Tree, TreeError> {
        let symbol = if self.name == HOLE && self.children.is_empty() {
            RankedSymbol::hole()
        } else {
            alphabet
                .resolve(&self.name, self.children.len())
                .cloned()
                .ok_or_else(|| match alphabet.get(&self.name) {
                    Some(sym) => TreeError::ArityMismatch {
                        address: Address::root(),
                        symbol: self.name.clone(),
                        rank: sym.rank,
                        children: self.children.len(),
                    },
                    None => TreeError::UnknownSymbol(self.name.clone()),
                })?
        };
        let children = self
            .children
            .iter()
            .map(|c| c.resolve(alphabet))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Tree::new_unchecked(symbol, children))
    }
}

fn skip_ws(chars: &[char], pos: &mut usize) {
    while chars.get(*pos).is_some_and(|c| c.is_whitespace()) {
        *pos += 1;
    }
}

fn token(chars: &[char], pos: &mut usize) -> Result<String, TreeError> {
    let start = *pos;
    while chars
        .get(*pos)
        .is_some_and(|&c| !c.is_whitespace() && c != '(' && c != ')')
    {
        *pos += 1;
    }
    if start == *pos {
        return Err(TreeError::Syntax {
            offset: start,
            message: "expected a symbol".into(),
        });
    }
    Ok(chars[start..*pos].iter().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alphabet() -> RankedAlphabet {
        RankedAlphabet::new([
            RankedSymbol::new("+", 2),
            RankedSymbol::new("+/3", 3),
            RankedSymbol::new("a", 0),
            RankedSymbol::new("b", 0),
            RankedSymbol::new("x", 0),
        ])
        .unwrap()
    }

    fn addr(s: &str) -> Address {
        s.parse().unwrap()
    }

    #[test]
    fn single_node_tree() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "a".to_string());
        let t = validate_tree(&m, &a).unwrap();
        assert_eq!(t.size(), 1);
    }

    #[test]
    fn binary_symbol_with_one_child_is_rejected() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "+".to_string());
        m.insert(addr("1"), "a".to_string());
        assert!(matches!(
            validate_tree(&m, &a),
            Err(TreeError::ArityMismatch { children: 1, .. })
        ));
    }

    #[test]
    fn child_under_leaf_is_arity_error_not_prefix_error() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "+".to_string());
        m.insert(addr("1"), "a".to_string());
        m.insert(addr("2"), "b".to_string());
        m.insert(addr("2.1"), "x".to_string());
        match validate_tree(&m, &a) {
            Err(TreeError::ArityMismatch { address, .. }) => assert_eq!(address, addr("2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_parent_is_not_prefix_closed() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "+".to_string());
        m.insert(addr("1"), "a".to_string());
        m.insert(addr("2.1"), "x".to_string());
        assert_eq!(
            validate_tree(&m, &a),
            Err(TreeError::NotPrefixClosed(addr("2.1")))
        );
    }

    #[test]
    fn gap_in_child_indices_is_rejected() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "+".to_string());
        m.insert(addr("1"), "a".to_string());
        m.insert(addr("3"), "b".to_string());
        assert!(matches!(
            validate_tree(&m, &a),
            Err(TreeError::ArityMismatch { .. })
        ));
    }

    #[test]
    fn unknown_symbol() {
        let a = alphabet();
        let mut m = BTreeMap::new();
        m.insert(Address::root(), "zz".to_string());
        assert_eq!(
            validate_tree(&m, &a),
            Err(TreeError::UnknownSymbol("zz".into()))
        );
    }

    #[test]
    fn positions_in_preorder() {
        let a = alphabet();
        let t = Tree::parse("(+ c# c#)", &a).unwrap();
        let c = a.const_marker().clone();
        assert_eq!(t.positions_of(&c), vec![addr("1"), addr("2")]);
        assert!(t.positions_of(&RankedSymbol::new("b", 0)).is_empty());
    }

    #[test]
    fn overloaded_arity_resolves_and_prints_base_name() {
        let a = alphabet();
        let t = Tree::parse("(+ a (+ a b x))", &a).unwrap();
        assert_eq!(t.children()[1].symbol().name(), "+/3");
        assert_eq!(t.to_string(), "(+ a (+ a b x))");
    }

    #[test]
    fn replace_and_lookup_subtrees() {
        let a = alphabet();
        let t = Tree::parse("(+ a (+ b x))", &a).unwrap();
        assert_eq!(t.subtree(&addr("2.2")).unwrap().to_string(), "x");
        let r = t
            .replace_subtree(&addr("2"), Tree::parse("a", &a).unwrap())
            .unwrap();
        assert_eq!(r.to_string(), "(+ a a)");
        assert_eq!(t.depth(), 3);
        assert_eq!(r.depth(), 2);
    }

    #[test]
    fn literal_and_marker_classification() {
        assert_eq!(RankedSymbol::new("-2/3", 0).literal_value(), Some(-2.0 / 3.0));
        assert_eq!(RankedSymbol::new("3", 0).literal_value(), Some(3.0));
        assert!(RankedSymbol::new("sT#", 0).is_const_marker());
        assert!(RankedSymbol::new("d#", 0).is_disc_marker());
        assert!(RankedSymbol::new("l1", 0).is_variable());
        assert_eq!(RankedSymbol::new("-2/3", 0).base_name(), "-2/3");
        assert_eq!(RankedSymbol::new("/", 2).base_name(), "/");
    }

    #[test]
    fn hole_is_reserved() {
        assert!(RankedAlphabet::new([RankedSymbol::new("?", 0)]).is_err());
        let t = Tree::parse("(+ ? a)", &alphabet()).unwrap();
        assert!(t.children()[0].symbol().is_hole());
    }

    #[test]
    fn inferred_alphabet_handles_overloads() {
        let t = Tree::parse_inferred("(+ (+ a b c) d)").unwrap();
        assert_eq!(t.symbol().name(), "+");
        assert_eq!(t.children()[0].symbol().name(), "+/3");
        assert_eq!(t.to_string(), "(+ (+ a b c) d)");
    }
}
