//! TNTP-format network and trip-table ingestion, plus k-shortest-path
//! enumeration that assembles `NetworkDesignInstance` values for real
//! networks.
//!
//! The text format: metadata lines `<KEY> value` up to `<END OF METADATA>`,
//! `~`-prefixed comment lines, then whitespace-separated rows terminated by
//! `;`. Link rows carry at least init, term, capacity, length, free-flow
//! time, BPR b, BPR power, speed and toll; anything after toll is ignored.

use crate::benchmarks::{Arc, NetworkDesignInstance, OdPair};
use crate::error::{Error, Result};
use std::collections::{BTreeMap, BinaryHeap, HashSet};

#[derive(Debug, Clone, PartialEq)]
pub struct RawLink {
    pub init_node: usize,
    pub term_node: usize,
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub bpr_b: f64,
    pub bpr_power: f64,
    pub toll: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawNetwork {
    pub n_nodes: usize,
    pub n_links: usize,
    pub first_thru_node: usize,
    pub links: Vec<RawLink>,
    /// metadata keys other than the structurally interpreted ones
    pub metadata: BTreeMap<String, String>,
}

fn parse_metadata_line(line: &str) -> Option<(String, String)> {
    let rest = line.trim().strip_prefix('<')?;
    let close = rest.find('>')?;
    let key = rest[..close].trim().to_string();
    let value = rest[close + 1..].trim().to_string();
    Some((key, value))
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        line,
        msg: format!("cannot parse {what} from {tok:?}"),
    })
}

/// Parses a TNTP network file.
pub fn parse_net(text: &str) -> Result<RawNetwork> {
    let mut n_nodes: Option<usize> = None;
    let mut n_links: Option<usize> = None;
    let mut first_thru_node = 1usize;
    let mut metadata = BTreeMap::new();
    let mut links = Vec::new();
    let mut in_metadata = true;

    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if in_metadata {
            if let Some((key, value)) = parse_metadata_line(line) {
                match key.to_uppercase().as_str() {
                    "NUMBER OF NODES" => n_nodes = Some(parse_num(&value, lineno, "node count")?),
                    "NUMBER OF LINKS" => n_links = Some(parse_num(&value, lineno, "link count")?),
                    "FIRST THRU NODE" => {
                        first_thru_node = parse_num(&value, lineno, "first thru node")?
                    }
                    "END OF METADATA" => in_metadata = false,
                    _ => {
                        metadata.insert(key, value);
                    }
                }
                continue;
            }
            // tolerate files without an explicit end marker
            in_metadata = false;
        }
        let row = line.strip_suffix(';').unwrap_or(line).trim();
        if row.is_empty() {
            continue;
        }
        let toks: Vec<&str> = row.split_whitespace().collect();
        if toks.len() < 9 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("link row needs at least 9 fields, got {}", toks.len()),
            });
        }
        let link = RawLink {
            init_node: parse_num(toks[0], lineno, "init node")?,
            term_node: parse_num(toks[1], lineno, "term node")?,
            capacity: parse_num(toks[2], lineno, "capacity")?,
            length: parse_num(toks[3], lineno, "length")?,
            free_flow_time: parse_num(toks[4], lineno, "free flow time")?,
            bpr_b: parse_num(toks[5], lineno, "bpr b")?,
            bpr_power: parse_num(toks[6], lineno, "bpr power")?,
            toll: parse_num(toks[8], lineno, "toll")?,
        };
        if link.capacity <= 0.0 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("capacity must be positive, got {}", link.capacity),
            });
        }
        links.push(link);
    }

    let n_nodes = n_nodes.ok_or(Error::Parse {
        line: 0,
        msg: "missing <NUMBER OF NODES>".into(),
    })?;
    if links.is_empty() {
        return Err(Error::Parse {
            line: 0,
            msg: "network has no links".into(),
        });
    }
    for (i, l) in links.iter().enumerate() {
        if l.init_node == 0 || l.init_node > n_nodes || l.term_node == 0 || l.term_node > n_nodes {
            return Err(Error::Parse {
                line: 0,
                msg: format!("link {i} references a node outside 1..={n_nodes}"),
            });
        }
    }
    Ok(RawNetwork {
        n_nodes,
        n_links: n_links.unwrap_or(links.len()),
        first_thru_node,
        links,
        metadata,
    })
}

/// Serializes a network back into TNTP text; `parse_net` of the output
/// reproduces the structure exactly.
pub fn to_tntp(net: &RawNetwork) -> String {
    let mut out = String::new();
    out.push_str(&format!("<NUMBER OF NODES> {}\n", net.n_nodes));
    out.push_str(&format!("<NUMBER OF LINKS> {}\n", net.n_links));
    out.push_str(&format!("<FIRST THRU NODE> {}\n", net.first_thru_node));
    for (k, v) in &net.metadata {
        out.push_str(&format!("<{k}> {v}\n"));
    }
    out.push_str("<END OF METADATA>\n\n");
    out.push_str("~\tinit\tterm\tcapacity\tlength\tfftime\tb\tpower\tspeed\ttoll\ttype\t;\n");
    for l in &net.links {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t0\t{}\t1\t;\n",
            l.init_node,
            l.term_node,
            l.capacity,
            l.length,
            l.free_flow_time,
            l.bpr_b,
            l.bpr_power,
            l.toll
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripTable {
    /// (origin, destination) → demand; zero-demand entries are dropped
    pub entries: BTreeMap<(usize, usize), f64>,
    pub total_demand: f64,
    /// `<TOTAL OD FLOW>` header when present
    pub header_total: Option<f64>,
    /// set when the header disagrees with the entry sum by more than 1e-3 relative
    pub header_mismatch: bool,
}

/// Parses a TNTP trips file ("Origin n" blocks of "dest : flow ;" pairs).
pub fn parse_trips(text: &str) -> Result<TripTable> {
    let mut entries = BTreeMap::new();
    let mut header_total = None;
    let mut origin: Option<usize> = None;
    for (idx, raw_line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('~') {
            continue;
        }
        if let Some((key, value)) = parse_metadata_line(line) {
            if key.to_uppercase() == "TOTAL OD FLOW" {
                header_total = Some(parse_num(&value, lineno, "total od flow")?);
            }
            continue;
        }
        if let Some(rest) = line.strip_prefix("Origin") {
            origin = Some(parse_num(rest.trim(), lineno, "origin node")?);
            continue;
        }
        let o = origin.ok_or(Error::Parse {
            line: lineno,
            msg: "demand entry before any Origin header".into(),
        })?;
        for chunk in line.split(';') {
            let chunk = chunk.trim();
            if chunk.is_empty() {
                continue;
            }
            let mut parts = chunk.split(':');
            let (dest_tok, flow_tok) = match (parts.next(), parts.next(), parts.next()) {
                (Some(d), Some(f), None) => (d.trim(), f.trim()),
                _ => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: format!("malformed demand pair {chunk:?}"),
                    })
                }
            };
            let dest: usize = parse_num(dest_tok, lineno, "destination")?;
            let flow: f64 = parse_num(flow_tok, lineno, "demand")?;
            if flow > 0.0 {
                entries.insert((o, dest), flow);
            }
        }
    }
    let total_demand: f64 = entries.values().sum();
    let header_mismatch = header_total
        .map(|h| (h - total_demand).abs() > 1e-3 * h.abs().max(1.0))
        .unwrap_or(false);
    if header_mismatch {
        log::warn!(
            "trip table header {:?} disagrees with entry sum {total_demand}",
            header_total
        );
    }
    Ok(TripTable {
        entries,
        total_demand,
        header_total,
        header_mismatch,
    })
}

/// How parsed links become a design instance.
#[derive(Debug, Clone)]
pub struct InstanceConfig {
    /// 0-based indices of expandable arcs; `None` means every arc
    pub expandable: Option<Vec<usize>>,
    /// per-arc expansion-cost coefficients: full per-arc vector, or one value
    /// per expandable arc, or `None` for 1.0 everywhere
    pub b_cost: Option<Vec<f64>>,
    pub gamma_weight: f64,
    /// use each link's parsed BPR (b, power) instead of the 0.15 / 4 model
    pub use_link_bpr: bool,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        InstanceConfig {
            expandable: None,
            b_cost: None,
            gamma_weight: 1.0,
            use_link_bpr: false,
        }
    }
}

/// Enumerates up to `k_per_od` loopless shortest paths (by free-flow time)
/// per OD pair and assembles the design instance.
pub fn enumerate_paths(
    network: &RawNetwork,
    trips: &TripTable,
    k_per_od: usize,
    config: &InstanceConfig,
) -> Result<NetworkDesignInstance> {
    if k_per_od == 0 {
        return Err(Error::InvalidConfig("k_per_od must be at least 1".into()));
    }
    let graph = Graph::new(network);
    let mut od_pairs = Vec::new();
    let mut paths_per_od = Vec::new();
    for (&(o, dst), &demand) in &trips.entries {
        if o == 0 || o > network.n_nodes || dst == 0 || dst > network.n_nodes {
            return Err(Error::Domain(format!(
                "trip {o}->{dst} references a node outside the network"
            )));
        }
        if o == dst {
            continue;
        }
        let paths = graph.k_shortest(o, dst, k_per_od);
        if paths.is_empty() {
            return Err(Error::Connectivity { origin: o, destination: dst });
        }
        od_pairs.push(OdPair { origin: o, destination: dst, demand });
        paths_per_od.push(paths);
    }

    let expandable_set: Option<HashSet<usize>> =
        config.expandable.as_ref().map(|v| v.iter().copied().collect());
    let n_arcs = network.links.len();
    let b_cost_vec: Vec<f64> = match (&config.b_cost, &config.expandable) {
        (None, _) => vec![1.0; n_arcs],
        (Some(b), _) if b.len() == n_arcs => b.clone(),
        (Some(b), Some(exp)) if b.len() == exp.len() => {
            let mut v = vec![1.0; n_arcs];
            for (&arc, &cost) in exp.iter().zip(b.iter()) {
                if arc >= n_arcs {
                    return Err(Error::InvalidConfig(format!("expandable arc {arc} out of range")));
                }
                v[arc] = cost;
            }
            v
        }
        (Some(b), _) => {
            return Err(Error::InvalidConfig(format!(
                "b_cost has {} entries; expected {n_arcs} or one per expandable arc",
                b.len()
            )))
        }
    };
    let arcs: Vec<Arc> = network
        .links
        .iter()
        .enumerate()
        .map(|(i, l)| Arc {
            u0: l.free_flow_time,
            s: l.capacity,
            b_cost: b_cost_vec[i],
            expandable: expandable_set.as_ref().map(|s| s.contains(&i)).unwrap_or(true),
            bpr_b: if config.use_link_bpr { l.bpr_b } else { 0.15 },
            bpr_power: if config.use_link_bpr { l.bpr_power } else { 4.0 },
        })
        .collect();

    NetworkDesignInstance::new(arcs, od_pairs, paths_per_od, config.gamma_weight)
}

struct Graph {
    /// outgoing arc indices per node (1-based nodes; slot 0 unused)
    out: Vec<Vec<usize>>,
    term: Vec<usize>,
    cost: Vec<f64>,
    first_thru_node: usize,
}

#[derive(PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
    arc: Option<usize>,
}

impl Eq for HeapItem {}
impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on (cost, node, arc)
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
            .then_with(|| other.arc.cmp(&self.arc))
    }
}
impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

/// Candidate path ordered by (cost, lexicographic arc sequence).
#[derive(PartialEq)]
struct Candidate {
    cost: f64,
    arcs: Vec<usize>,
}
impl Eq for Candidate {}
impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.arcs.cmp(&self.arcs))
    }
}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Graph {
    fn new(net: &RawNetwork) -> Self {
        let mut out = vec![Vec::new(); net.n_nodes + 1];
        let mut term = Vec::with_capacity(net.links.len());
        let mut cost = Vec::with_capacity(net.links.len());
        for (i, l) in net.links.iter().enumerate() {
            out[l.init_node].push(i);
            term.push(l.term_node);
            cost.push(l.free_flow_time);
        }
        Graph {
            out,
            term,
            cost,
            first_thru_node: net.first_thru_node,
        }
    }

    fn arc_init(&self, arc: usize) -> usize {
        self.out
            .iter()
            .position(|arcs| arcs.contains(&arc))
            .unwrap_or(0)
    }

    /// Dijkstra with ties broken toward smaller predecessor arc indices.
    /// Nodes below `first_thru_node` are terminals only (standard TNTP rule),
    /// except the origin and destination themselves.
    fn shortest(
        &self,
        src: usize,
        dst: usize,
        banned_arcs: &HashSet<usize>,
        banned_nodes: &HashSet<usize>,
    ) -> Option<Vec<usize>> {
        let n = self.out.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut pred: Vec<Option<usize>> = vec![None; n];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: src, arc: None });
        while let Some(item) = heap.pop() {
            if item.cost > dist[item.node] {
                continue;
            }
            if item.node == dst {
                break;
            }
            let through_ok =
                item.node == src || item.node >= self.first_thru_node;
            if !through_ok {
                continue;
            }
            for &arc in &self.out[item.node] {
                if banned_arcs.contains(&arc) {
                    continue;
                }
                let v = self.term[arc];
                if banned_nodes.contains(&v) {
                    continue;
                }
                let c = item.cost + self.cost[arc];
                let better = c < dist[v]
                    || (c == dist[v] && pred[v].map(|p| arc < p).unwrap_or(false));
                if better {
                    dist[v] = c;
                    pred[v] = Some(arc);
                    heap.push(HeapItem { cost: c, node: v, arc: Some(arc) });
                }
            }
        }
        if !dist[dst].is_finite() {
            return None;
        }
        let mut arcs = Vec::new();
        let mut node = dst;
        while node != src {
            let arc = pred[node]?;
            arcs.push(arc);
            node = self.arc_init(arc);
        }
        arcs.reverse();
        Some(arcs)
    }

    fn path_cost(&self, arcs: &[usize]) -> f64 {
        arcs.iter().map(|&a| self.cost[a]).sum()
    }

    fn path_nodes(&self, src: usize, arcs: &[usize]) -> Vec<usize> {
        let mut nodes = vec![src];
        for &a in arcs {
            nodes.push(self.term[a]);
        }
        nodes
    }

    /// Yen's algorithm for up to k loopless shortest paths.
    fn k_shortest(&self, src: usize, dst: usize, k: usize) -> Vec<Vec<usize>> {
        let mut accepted: Vec<Vec<usize>> = Vec::new();
        let first = match self.shortest(src, dst, &HashSet::new(), &HashSet::new()) {
            Some(p) => p,
            None => return accepted,
        };
        accepted.push(first);
        let mut candidates: BinaryHeap<Candidate> = BinaryHeap::new();
        let mut seen: HashSet<Vec<usize>> = accepted.iter().cloned().collect();
        while accepted.len() < k {
            let prev = accepted.last().unwrap().clone();
            let prev_nodes = self.path_nodes(src, &prev);
            for i in 0..prev.len() {
                let spur_node = prev_nodes[i];
                let root = &prev[..i];
                let mut banned_arcs = HashSet::new();
                for path in &accepted {
                    if path.len() > i && path[..i] == *root {
                        banned_arcs.insert(path[i]);
                    }
                }
                let banned_nodes: HashSet<usize> = prev_nodes[..i].iter().copied().collect();
                if let Some(spur) = self.shortest(spur_node, dst, &banned_arcs, &banned_nodes) {
                    let mut full = root.to_vec();
                    full.extend(spur);
                    if seen.insert(full.clone()) {
                        candidates.push(Candidate { cost: self.path_cost(&full), arcs: full });
                    }
                }
            }
            match candidates.pop() {
                Some(c) => accepted.push(c.arcs),
                None => break,
            }
        }
        accepted
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BRAESS_NET: &str = "\
<NUMBER OF NODES> 4
<NUMBER OF LINKS> 5
<FIRST THRU NODE> 1
<END OF METADATA>
~ init term capacity length fftime b power speed toll type ;
1 2 2 1 1 0.15 4 0 0 1 ;
1 3 4 3 3 0.15 4 0 0 1 ;
2 4 4 3 3 0.15 4 0 0 1 ;
2 3 1 0.5 0.5 0.15 4 0 0 1 ;
3 4 2 1 1 0.15 4 0 0 1 ;
";

    const BRAESS_TRIPS: &str = "\
<NUMBER OF ZONES> 4
<TOTAL OD FLOW> 6.0
<END OF METADATA>
Origin 1
  4 : 6.0;
";

    #[test]
    fn metadata_and_rows_parse() {
        let net = parse_net(BRAESS_NET).unwrap();
        assert_eq!(net.n_nodes, 4);
        assert_eq!(net.n_links, 5);
        assert_eq!(net.links.len(), 5);
        let l = &net.links[0];
        assert_eq!((l.init_node, l.term_node), (1, 2));
        assert_eq!(l.capacity, 2.0);
        assert_eq!(l.free_flow_time, 1.0);
        assert_eq!(l.bpr_power, 4.0);
    }

    #[test]
    fn example_link_row_fields() {
        let text = "<NUMBER OF NODES> 24\n<END OF METADATA>\n1 2 25900.2 6 6 0.15 4 0 0 1 ;\n";
        let net = parse_net(text).unwrap();
        let l = &net.links[0];
        assert_eq!(l.capacity, 25900.2);
        assert_eq!(l.free_flow_time, 6.0);
        assert_eq!(l.bpr_power, 4.0);
        assert_eq!(l.toll, 0.0);
    }

    #[test]
    fn empty_link_section_is_rejected() {
        let err = parse_net("<NUMBER OF NODES> 3\n<END OF METADATA>\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn missing_node_count_is_rejected() {
        let err = parse_net("<END OF METADATA>\n1 2 3 1 1 0.15 4 0 0 1 ;\n").unwrap_err();
        assert!(matches!(err, Error::Parse { .. }));
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_net("<NUMBER OF NODES> 2\n<END OF METADATA>\n1 2 3 ;\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trips_parse_drop_zeros_and_check_header() {
        let t = parse_trips("<TOTAL OD FLOW> 200.0\n<END OF METADATA>\nOrigin 1\n 2 : 100.0; 3 : 100.0;\n 4 : 0.0;\n").unwrap();
        assert_eq!(t.entries.len(), 2);
        assert_eq!(t.entries[&(1, 2)], 100.0);
        assert_eq!(t.total_demand, 200.0);
        assert!(!t.header_mismatch);
        let t = parse_trips("<TOTAL OD FLOW> 500.0\n<END OF METADATA>\nOrigin 1\n 2 : 100.0;\n").unwrap();
        assert!(t.header_mismatch);
    }

    #[test]
    fn malformed_demand_pair_reports_line() {
        let err = parse_trips("Origin 1\n 2 = 100.0;\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_preserves_structure() {
        let net = parse_net(BRAESS_NET).unwrap();
        let text = to_tntp(&net);
        let again = parse_net(&text).unwrap();
        assert_eq!(net, again);
    }

    #[test]
    fn braess_paths_enumerate_exactly() {
        let net = parse_net(BRAESS_NET).unwrap();
        let trips = parse_trips(BRAESS_TRIPS).unwrap();
        let inst = enumerate_paths(&net, &trips, 3, &InstanceConfig::default()).unwrap();
        assert_eq!(inst.paths.len(), 3);
        let mut sorted = inst.paths.clone();
        sorted.sort();
        assert_eq!(sorted, vec![vec![0, 2], vec![0, 3, 4], vec![1, 4]]);
        // demand replicated per path
        assert!(inst.d.iter().all(|&v| v == 6.0));
        // no fourth simple path exists
        let inst4 = enumerate_paths(&net, &trips, 10, &InstanceConfig::default()).unwrap();
        assert_eq!(inst4.paths.len(), 3);
    }

    #[test]
    fn k1_gives_single_path_blocks() {
        let net = parse_net(BRAESS_NET).unwrap();
        let trips = parse_trips(BRAESS_TRIPS).unwrap();
        let inst = enumerate_paths(&net, &trips, 1, &InstanceConfig::default()).unwrap();
        assert_eq!(inst.paths.len(), 1);
        assert_eq!(inst.block_sizes(), vec![1]);
        for k in 0..inst.sigma.ncols() {
            assert_eq!(inst.sigma.column(k).sum(), 1.0);
        }
    }

    #[test]
    fn parallel_equal_cost_arcs_tie_break_by_index() {
        let text = "<NUMBER OF NODES> 2\n<END OF METADATA>\n1 2 1 1 1 0.15 4 0 0 1 ;\n1 2 1 1 1 0.15 4 0 0 1 ;\n";
        let net = parse_net(text).unwrap();
        let trips = parse_trips("Origin 1\n 2 : 1.0;\n").unwrap();
        let inst = enumerate_paths(&net, &trips, 1, &InstanceConfig::default()).unwrap();
        assert_eq!(inst.paths, vec![vec![0]]);
        let inst2 = enumerate_paths(&net, &trips, 2, &InstanceConfig::default()).unwrap();
        assert_eq!(inst2.paths, vec![vec![0], vec![1]]);
    }

    #[test]
    fn disconnected_od_is_reported() {
        let text = "<NUMBER OF NODES> 3\n<END OF METADATA>\n1 2 1 1 1 0.15 4 0 0 1 ;\n";
        let net = parse_net(text).unwrap();
        let trips = parse_trips("Origin 1\n 3 : 5.0;\n").unwrap();
        let err = enumerate_paths(&net, &trips, 2, &InstanceConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Connectivity { origin: 1, destination: 3 }));
    }

    #[test]
    fn enumerated_paths_are_simple_and_connect() {
        let net = parse_net(BRAESS_NET).unwrap();
        let trips = parse_trips(BRAESS_TRIPS).unwrap();
        let inst = enumerate_paths(&net, &trips, 3, &InstanceConfig::default()).unwrap();
        let g = Graph::new(&net);
        for path in &inst.paths {
            let nodes = g.path_nodes(1, path);
            let unique: HashSet<usize> = nodes.iter().copied().collect();
            assert_eq!(unique.len(), nodes.len(), "path repeats a node");
            assert_eq!(*nodes.first().unwrap(), 1);
            assert_eq!(*nodes.last().unwrap(), 4);
            // Λ column weight equals path length
            let k = inst.paths.iter().position(|p| p == path).unwrap();
            let col_sum: f64 = inst.lambda.column(k).sum();
            assert_eq!(col_sum as usize, path.len());
        }
    }
}
