use logloss_mc::serialize_tree;

use crate::error::CliResult;
use crate::trees::resolve_tree;
use crate::TreeArgs;

fn classes_text(c: &[usize]) -> String {
    c.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn run(args: &TreeArgs) -> CliResult<()> {
    let tree = resolve_tree(&args.tree, args.classes)?;
    println!("tree     {}", serialize_tree(&tree));
    println!("classes  {}", tree.num_classes());
    println!("nodes    {}", tree.num_nodes());
    println!("depth    {}", tree.depth());
    println!("leveraged parameter vectors  {}", tree.leveraged_vector_count());
    println!();
    println!("node  one-branch | zero-branch");
    for (j, node) in tree.nodes().iter().enumerate() {
        println!("{j:<4}  {} | {}", classes_text(node.one_branch()), classes_text(node.zero_branch()));
    }
    println!();
    println!("class  codeword");
    for c in 0..tree.num_classes() {
        println!("{c:<5}  {}", tree.codeword_string(c));
    }
    Ok(())
}
