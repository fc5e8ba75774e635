//! Desk-scale synthetic clone corpus.
//!
//! Each functionality is a small Java method template written in a tiny
//! markup:
//!
//! * `$c` is an identifier slot drawn from the name pool of letter `c`
//!   (`$f` uses the template's own method-name pool);
//! * `@{ A @| B @}` chooses between two loop forms (`for` and `while`); all
//!   such choices in one variant use the same side;
//! * `?[ S ?]` is an optional statement.
//!
//! A variant flips a coin for renaming, for the loop form and for every
//! optional statement. Two variants of one functionality form a true pair
//! whose clone type follows from what differs between them.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CloneType, FragmentPair, FragmentStore, FORMAT_VERSION};
use crate::error::{Error, Result};
use crate::frontend::{Granularity, SourceFragment};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_functionalities: usize,
    pub variants_per_functionality: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_functionalities: 4,
            variants_per_functionality: 10,
            seed: 0,
        }
    }
}

/// How one variant was derived from its template.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantRecord {
    pub id: String,
    pub functionality: String,
    pub while_loops: bool,
    pub optionals: Vec<bool>,
    pub names: BTreeMap<char, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub format: String,
    pub version: u32,
    pub spec: SynthSpec,
    pub fragments: usize,
    pub true_pairs: usize,
    pub false_pairs: usize,
    pub variants: Vec<VariantRecord>,
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub fragments: Vec<SourceFragment>,
    pub store: FragmentStore,
    pub pairs: Vec<FragmentPair>,
    pub manifest: SynthManifest,
}

impl SyntheticCorpus {
    pub fn functionality(&self, id: &str) -> Option<&str> {
        self.manifest
            .variants
            .iter()
            .find(|v| v.id == id)
            .map(|v| v.functionality.as_str())
    }

    pub fn manifest_json(&self) -> String {
        serde_json::to_string_pretty(&self.manifest).expect("manifest serializes") + "\n"
    }
}

const POOLS: &[(char, &[&str])] = &[
    ('a', &["arr", "data", "values", "nums", "xs", "items"]),
    ('i', &["i", "j", "k", "idx", "pos", "p"]),
    ('s', &["sum", "total", "acc", "result", "res", "out"]),
    ('t', &["tmp", "t", "swap", "hold", "aux", "buf"]),
    ('c', &["count", "cnt", "hits", "tally", "num", "c"]),
    ('n', &["n", "len", "size", "limit", "m", "bound"]),
    ('x', &["x", "key", "val", "v", "elem", "want"]),
];

struct Template {
    name: &'static str,
    method_names: &'static [&'static str],
    body: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template {
        name: "array_sum",
        method_names: &["arraySum", "sumArray", "addAll", "sumOf", "accumulate", "computeSum"],
        body: r#"int $f(int[] $a) {
    int $s = 0;
    ?[if ($a == null) { return 0; }?]
    @{for (int $i = 0; $i < $a.length; $i++) {
        $s += $a[$i];
    }@|int $i = 0;
    while ($i < $a.length) {
        $s += $a[$i];
        $i++;
    }@}
    ?[System.out.println($s);?]
    return $s;
}"#,
    },
    Template {
        name: "find_max",
        method_names: &["findMax", "maximum", "largest", "maxOf", "getMax", "peak"],
        body: r#"int $f(int[] $a) {
    ?[if ($a.length == 0) { throw new IllegalArgumentException("empty"); }?]
    int $s = $a[0];
    @{for (int $i = 1; $i < $a.length; $i++) {
        if ($a[$i] > $s) {
            $s = $a[$i];
        }
    }@|int $i = 1;
    while ($i < $a.length) {
        if ($a[$i] > $s) {
            $s = $a[$i];
        }
        $i++;
    }@}
    ?[int $c = 0;?]
    return $s;
}"#,
    },
    Template {
        name: "reverse_string",
        method_names: &["reverse", "reversed", "flip", "backwards", "mirror", "invert"],
        body: r#"String $f(String $a) {
    ?[if ($a == null) { return null; }?]
    StringBuilder $s = new StringBuilder();
    @{for (int $i = $a.length() - 1; $i >= 0; $i--) {
        $s.append($a.charAt($i));
    }@|int $i = $a.length() - 1;
    while ($i >= 0) {
        $s.append($a.charAt($i));
        $i--;
    }@}
    ?[int $n = $s.length();?]
    return $s.toString();
}"#,
    },
    Template {
        name: "linear_search",
        method_names: &["indexOf", "search", "find", "locate", "lookup", "position"],
        body: r#"int $f(int[] $a, int $x) {
    ?[int $n = $a.length;?]
    @{for (int $i = 0; $i < $a.length; $i++) {
        if ($a[$i] == $x) {
            return $i;
        }
    }@|int $i = 0;
    while ($i < $a.length) {
        if ($a[$i] == $x) {
            return $i;
        }
        $i++;
    }@}
    ?[System.out.println("not found");?]
    return -1;
}"#,
    },
    Template {
        name: "factorial",
        method_names: &["factorial", "fact", "product", "prodUpTo", "computeFactorial", "bang"],
        body: r#"long $f(int $n) {
    ?[if ($n < 0) { throw new IllegalArgumentException(); }?]
    long $s = 1;
    @{for (int $i = 2; $i <= $n; $i++) {
        $s *= $i;
    }@|int $i = 2;
    while ($i <= $n) {
        $s *= $i;
        $i++;
    }@}
    ?[System.out.println($s);?]
    return $s;
}"#,
    },
    Template {
        name: "count_evens",
        method_names: &["countEvens", "evens", "numEven", "evenCount", "tallyEven", "howManyEven"],
        body: r#"int $f(int[] $a) {
    int $c = 0;
    @{for (int $i = 0; $i < $a.length; $i++) {
        if ($a[$i] % 2 == 0) {
            $c++;
        }
    }@|int $i = 0;
    while ($i < $a.length) {
        if ($a[$i] % 2 == 0) {
            $c++;
        }
        $i++;
    }@}
    ?[if ($c == 0) { System.out.println("none"); }?]
    ?[int $n = $a.length - $c;?]
    return $c;
}"#,
    },
    Template {
        name: "fibonacci",
        method_names: &["fib", "fibonacci", "fibo", "nthFib", "fibNumber", "computeFib"],
        body: r#"int $f(int $n) {
    ?[if ($n <= 1) { return $n; }?]
    int $x = 0;
    int $s = 1;
    @{for (int $i = 0; $i < $n; $i++) {
        int $t = $x + $s;
        $x = $s;
        $s = $t;
    }@|int $i = 0;
    while ($i < $n) {
        int $t = $x + $s;
        $x = $s;
        $s = $t;
        $i++;
    }@}
    ?[System.out.println($x);?]
    return $x;
}"#,
    },
    Template {
        name: "gcd",
        method_names: &["gcd", "greatestCommon", "euclid", "commonDivisor", "hcf", "gcdOf"],
        body: r#"int $f(int $x, int $n) {
    ?[if ($x < 0) { $x = -$x; }?]
    ?[if ($n < 0) { $n = -$n; }?]
    @{for (; $n != 0; ) {
        int $t = $x % $n;
        $x = $n;
        $n = $t;
    }@|while ($n != 0) {
        int $t = $x % $n;
        $x = $n;
        $n = $t;
    }@}
    return $x;
}"#,
    },
    Template {
        name: "palindrome",
        method_names: &["isPalindrome", "palindrome", "symmetric", "readsSame", "checkPal", "isMirror"],
        body: r#"boolean $f(String $a) {
    int $i = 0;
    int $n = $a.length() - 1;
    @{for (; $i < $n; $i++, $n--) {
        if ($a.charAt($i) != $a.charAt($n)) {
            return false;
        }
    }@|while ($i < $n) {
        if ($a.charAt($i) != $a.charAt($n)) {
            return false;
        }
        $i++;
        $n--;
    }@}
    ?[System.out.println("palindrome");?]
    ?[int $c = $n - $i;?]
    return true;
}"#,
    },
    Template {
        name: "bubble_sort",
        method_names: &["bubbleSort", "sort", "sortInPlace", "order", "arrange", "bubble"],
        body: r#"void $f(int[] $a) {
    int $n = $a.length;
    ?[if ($n < 2) { return; }?]
    for (int $i = 0; $i < $n - 1; $i++) {
        @{for (int $x = 0; $x < $n - $i - 1; $x++) {
            if ($a[$x] > $a[$x + 1]) {
                int $t = $a[$x];
                $a[$x] = $a[$x + 1];
                $a[$x + 1] = $t;
            }
        }@|int $x = 0;
        while ($x < $n - $i - 1) {
            if ($a[$x] > $a[$x + 1]) {
                int $t = $a[$x];
                $a[$x] = $a[$x + 1];
                $a[$x + 1] = $t;
            }
            $x++;
        }@}
    }
    ?[System.out.println($n);?]
}"#,
    },
];

pub fn template_count() -> usize {
    TEMPLATES.len()
}

#[derive(Clone, Debug, PartialEq)]
enum Seg {
    Text(String),
    Slot(char),
    Alt(Vec<Seg>, Vec<Seg>),
    Opt(usize, Vec<Seg>),
}

fn parse_markup(src: &str) -> Vec<Seg> {
    fn inner(chars: &[char], pos: &mut usize, n_opt: &mut usize, stop: &[&str]) -> Vec<Seg> {
        let mut out = Vec::new();
        let mut text = String::new();
        let at = |pos: usize, pat: &str| {
            pat.chars().enumerate().all(|(k, c)| chars.get(pos + k) == Some(&c))
        };
        while *pos < chars.len() {
            if stop.iter().any(|s| at(*pos, s)) {
                break;
            }
            let flush = |text: &mut String, out: &mut Vec<Seg>| {
                if !text.is_empty() {
                    out.push(Seg::Text(std::mem::take(text)));
                }
            };
            if chars[*pos] == '$' {
                flush(&mut text, &mut out);
                out.push(Seg::Slot(chars[*pos + 1]));
                *pos += 2;
            } else if at(*pos, "@{") {
                flush(&mut text, &mut out);
                *pos += 2;
                let a = inner(chars, pos, n_opt, &["@|"]);
                *pos += 2;
                let b = inner(chars, pos, n_opt, &["@}"]);
                *pos += 2;
                out.push(Seg::Alt(a, b));
            } else if at(*pos, "?[") {
                flush(&mut text, &mut out);
                *pos += 2;
                let k = *n_opt;
                *n_opt += 1;
                let body = inner(chars, pos, n_opt, &["?]"]);
                *pos += 2;
                out.push(Seg::Opt(k, body));
            } else {
                text.push(chars[*pos]);
                *pos += 1;
            }
        }
        if !text.is_empty() {
            out.push(Seg::Text(text));
        }
        out
    }
    let chars: Vec<char> = src.chars().collect();
    inner(&chars, &mut 0, &mut 0, &[])
}

fn count_optionals(segs: &[Seg]) -> usize {
    segs.iter()
        .map(|s| match s {
            Seg::Opt(_, body) => 1 + count_optionals(body),
            Seg::Alt(a, b) => count_optionals(a) + count_optionals(b),
            _ => 0,
        })
        .sum()
}

fn slots(segs: &[Seg], out: &mut Vec<char>) {
    for s in segs {
        match s {
            Seg::Slot(c) if !out.contains(c) => out.push(*c),
            Seg::Alt(a, b) => {
                slots(a, out);
                slots(b, out);
            }
            Seg::Opt(_, body) => slots(body, out),
            _ => {}
        }
    }
}

fn render(segs: &[Seg], v: &VariantRecord, out: &mut String) {
    for s in segs {
        match s {
            Seg::Text(t) => out.push_str(t),
            Seg::Slot(c) => out.push_str(&v.names[c]),
            Seg::Alt(a, b) => render(if v.while_loops { b } else { a }, v, out),
            Seg::Opt(k, body) => {
                if v.optionals[*k] {
                    render(body, v, out);
                }
            }
        }
    }
}

fn pool(t: &Template, c: char) -> &'static [&'static str] {
    if c == 'f' {
        return t.method_names;
    }
    POOLS
        .iter()
        .find(|(k, _)| *k == c)
        .map(|(_, p)| *p)
        .unwrap_or_else(|| panic!("template {} uses unknown slot ${c}", t.name))
}

/// Clone type of two variants of the same functionality.
pub fn clone_type_between(a: &VariantRecord, b: &VariantRecord) -> CloneType {
    if a.while_loops != b.while_loops {
        return CloneType::WT3T4;
    }
    let differing = a.optionals.iter().zip(&b.optionals).filter(|(x, y)| x != y).count();
    match differing {
        0 if a.names == b.names => CloneType::T1,
        0 => CloneType::T2,
        1 => CloneType::ST3,
        _ => CloneType::MT3,
    }
}

/// Generates the corpus: the first `n_functionalities` templates, each with
/// `variants_per_functionality` seeded variants, and every unordered pair of
/// fragments labeled by whether they share a functionality.
pub fn gen_synthetic_corpus(spec: &SynthSpec) -> Result<SyntheticCorpus> {
    if spec.n_functionalities < 2 || spec.n_functionalities > TEMPLATES.len() {
        return Err(Error::InvalidArgument(format!(
            "n_functionalities must be in 2..={}, got {}",
            TEMPLATES.len(),
            spec.n_functionalities
        )));
    }
    if spec.variants_per_functionality == 0 {
        return Err(Error::InvalidArgument("variants_per_functionality must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut variants = Vec::new();
    let mut fragments = Vec::new();
    for t in &TEMPLATES[..spec.n_functionalities] {
        let segs = parse_markup(t.body);
        let n_opt = count_optionals(&segs);
        let mut letters = Vec::new();
        slots(&segs, &mut letters);
        letters.sort_unstable();
        for k in 0..spec.variants_per_functionality {
            let renamed = rng.random_bool(0.5);
            let names = letters
                .iter()
                .map(|&c| {
                    let p = pool(t, c);
                    let name = if renamed { p[rng.random_range(1..p.len())] } else { p[0] };
                    (c, name.to_string())
                })
                .collect();
            let while_loops = rng.random_bool(0.5);
            let optionals = (0..n_opt).map(|_| rng.random_bool(0.5)).collect();
            let record = VariantRecord {
                id: format!("{}_{k:02}", t.name),
                functionality: t.name.to_string(),
                while_loops,
                optionals,
                names,
            };
            let mut code = String::new();
            render(&segs, &record, &mut code);
            let code: String = code
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| format!("{}\n", l.trim_end()))
                .collect();
            fragments.push(SourceFragment::new(record.id.clone(), code, Granularity::Method));
            variants.push(record);
        }
    }

    let mut pairs = Vec::new();
    for i in 0..variants.len() {
        for j in i + 1..variants.len() {
            let (a, b) = (&variants[i], &variants[j]);
            pairs.push(if a.functionality == b.functionality {
                FragmentPair::new(&a.id, &b.id, true, Some(clone_type_between(a, b)))
            } else {
                FragmentPair::new(&a.id, &b.id, false, Some(CloneType::NonClone))
            });
        }
    }

    let input = fragments.iter().map(|f| (f.clone(), f.id.clone())).collect();
    let (store, skipped) = FragmentStore::build(input, None)?;
    if let Some(s) = skipped.first() {
        return Err(Error::format(&s.id, format!("generated fragment does not parse: {}", s.error)));
    }
    let true_pairs = pairs.iter().filter(|p| p.is_clone()).count();
    let manifest = SynthManifest {
        format: "synthetic-manifest".into(),
        version: FORMAT_VERSION,
        spec: *spec,
        fragments: fragments.len(),
        true_pairs,
        false_pairs: pairs.len() - true_pairs,
        variants,
    };
    Ok(SyntheticCorpus {
        fragments,
        store,
        pairs,
        manifest,
    })
}
