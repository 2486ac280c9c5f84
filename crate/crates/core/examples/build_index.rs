//! Offline index construction: k-means leaves, an average-linkage tree over
//! their centroids, and the JSON round trip.
//!
//!     cargo run --release --example build_index -- 5000 12

use opaque_topk::harness::{gen_synthetic, SyntheticSpec};
use opaque_topk::index::{build_index, hac_average_linkage, kmeans, Index, IndexNode};

fn print_tree(node: &IndexNode, indent: usize) {
    match node {
        IndexNode::Leaf {
            node_id,
            elements,
            centroid,
        } => {
            println!(
                "{:indent$}{node_id}: {} elements, centroid {:.2}",
                "",
                elements.len(),
                centroid[0]
            )
        }
        IndexNode::Internal { node_id, children } => {
            println!("{:indent$}{node_id}", "");
            for c in children {
                print_tree(c, indent + 2);
            }
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().map_or(Ok(5000), |s| s.parse())?;
    let leaves: usize = args.next().map_or(Ok(12), |s| s.parse())?;

    let data = gen_synthetic(&SyntheticSpec::new(10, n.div_ceil(10), 3))?;
    let points = data.points();

    // The two stages separately.
    let clusters = kmeans(&points, leaves, 3)?;
    let centroids: Vec<Vec<f64>> = clusters.iter().map(|c| c.centroid.clone()).collect();
    let dendrogram = hac_average_linkage(&centroids);
    for m in dendrogram.merges.iter().take(3) {
        println!(
            "merge {} + {} at distance {:.3}",
            m.left, m.right, m.distance
        );
    }

    // Or in one call, optionally clustering a subsample first.
    let started = std::time::Instant::now();
    let index = build_index(&points, leaves, Some(n / 2), 3)?;
    println!(
        "\nbuilt in {:.1} ms, depth {}",
        started.elapsed().as_secs_f64() * 1e3,
        index.depth()
    );
    print_tree(&index.root, 0);

    let json = index.to_json()?;
    assert_eq!(Index::from_json(&json)?, index);
    println!("\n{} bytes of JSON", json.len());
    Ok(())
}
