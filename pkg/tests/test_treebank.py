import pytest

from treetex.corpus import GrammarConfig, generate
from treetex.tokenizer import tokenize_spaced
from treetex.treebank import (
    NO_PARENT,
    DanglingScriptError,
    ExprTree,
    ParentAnnotation,
    UnbalancedBracesError,
    brackets_balanced,
    build_tree,
    sequence_complexity,
    structural_complexity,
    to_tuple_text,
    treeify,
    treeify_tokens,
)
from treetex.vocab import STRUCTURAL_TOKENS, TokenSeq, Vocab, classify, TokenClass

VOCAB = Vocab.default()

GOLDEN_TEXT = "3 ^ { 2 } - 1 = 8"
GOLDEN_PARENTS = (-1, -1, -1, 0, -1, 0, 5, 6, 7)
GOLDEN_TUPLES = "(0, -1), (1, -1), (2, -1), (3, 0), (4, -1), (5, 0), (6, 5), (7, 6), (8, 7)"


def tree_of(text):
    return treeify(tokenize_spaced(text, VOCAB))


def test_golden_annotation():
    assert tree_of(GOLDEN_TEXT).parents == GOLDEN_PARENTS


def test_golden_tuple_text():
    assert to_tuple_text(tree_of(GOLDEN_TEXT)) == GOLDEN_TUPLES


def test_single_node_chain_root():
    assert tree_of("x").parents == (NO_PARENT,)


def test_baseline_chain():
    assert tree_of("a + b").parents == (-1, 0, 1)


def test_empty_sequence():
    assert tree_of("").parents == ()


def test_frac_two_arguments():
    # \frac { a } { b }: both argument heads attach to the command
    assert tree_of("\\frac { a } { b }").parents == (-1, -1, 0, -1, -1, 0, -1)


def test_frac_followed_by_baseline():
    # after the last argument the attachment point is the command
    assert tree_of("\\frac { a } { b } + c").parents == (
        -1, -1, 0, -1, -1, 0, -1, 0, 7,
    )


def test_sqrt_single_argument():
    assert tree_of("\\sqrt { x } y").parents == (-1, -1, 0, -1, 0)


def test_sqrt_with_index_group():
    # index brackets are structural for this occurrence
    assert tree_of("\\sqrt [ 3 ] { x }").parents == (-1, -1, 0, -1, -1, 0, -1)


def test_brackets_ordinary_outside_sqrt():
    assert tree_of("[ a ]").parents == (-1, 0, 1)


def test_sum_with_limits():
    parents = tree_of("\\sum _ { i = 1 } ^ { n } x").parents
    #           \sum  _  {  i  =  1  }  ^  {  n  }  x
    assert parents == (-1, -1, -1, 0, 3, 4, -1, -1, -1, 0, -1, 0)


def test_base_with_both_scripts():
    parents = tree_of("x _ { a } ^ { b } y").parents
    assert parents == (-1, -1, -1, 0, -1, -1, -1, 0, -1, 0)


def test_script_single_token_argument():
    assert tree_of("x ^ 2 y").parents == (-1, -1, 0, 0)


def test_script_argument_reverts_attachment():
    # "-" attaches to "3", not to "2"
    parents = tree_of("3 ^ { 2 } - 1").parents
    assert parents[5] == 0


def test_nested_scripts():
    parents = tree_of("x ^ { y ^ { 2 } }").parents
    #           x  ^  {  y  ^  {  2  }  }
    assert parents == (-1, -1, -1, 0, -1, -1, 3, -1, -1)


def test_bare_group_transparent():
    # R5: the chain runs through the group; afterwards the attachment
    # point is the last tree node inside
    parents = tree_of("{ a b } c").parents
    assert parents == (-1, -1, 1, -1, 2)


def test_empty_bare_group_keeps_attachment():
    assert tree_of("a { } b").parents == (-1, -1, -1, 0)


def test_script_on_bare_group_uses_last_node():
    parents = tree_of("{ a b } ^ { 2 }").parents
    #           {  a  b  }  ^  {  2  }
    assert parents == (-1, -1, 1, -1, -1, -1, 2, -1)


def test_unknown_command_consumes_brace_groups():
    parents = tree_of("\\lim { a b } c").parents
    #           \lim  {  a  b  }  c
    assert parents == (-1, -1, 0, 2, -1, 0)


def test_zero_argument_command_is_plain_symbol():
    assert tree_of("\\alpha + \\beta").parents == (-1, 0, 1)


def test_script_arg_is_command_unit():
    parents = tree_of("x ^ \\frac { a } { b } y").parents
    #           x  ^  \frac  {  a  }  {  b  }  y
    assert parents == (-1, -1, 0, -1, 2, -1, -1, 2, -1, 0)


def test_structural_tokens_always_no_parent():
    for text in (GOLDEN_TEXT, "\\frac { a } { b }", "x _ { i } ^ { 2 } y"):
        seq = tokenize_spaced(text, VOCAB)
        ann = treeify(seq)
        for i, tok in enumerate(seq.tokens()):
            if classify(tok) is TokenClass.STRUCTURAL:
                assert ann.parents[i] == NO_PARENT


def test_unbalanced_close():
    with pytest.raises(UnbalancedBracesError) as err:
        tree_of("} {")
    assert err.value.position == 0


def test_unbalanced_open():
    with pytest.raises(UnbalancedBracesError):
        tree_of("x ^ { 2")


def test_dangling_script():
    with pytest.raises(DanglingScriptError) as err:
        tree_of("x ^")
    assert err.value.position == 1


def test_annotation_rejects_forward_parent():
    with pytest.raises(ValueError):
        ParentAnnotation((1, -1))


# -- build_tree -----------------------------------------------------------


def test_build_tree_golden():
    tree = build_tree(ParentAnnotation(GOLDEN_PARENTS))
    assert tree.roots == (0,)
    assert tree.child_list(0) == (3, 5)
    assert tree.child_list(5) == (6,)
    assert tree.child_list(6) == (7,)
    assert tree.child_list(7) == (8,)
    assert set(tree.nodes) == {0, 3, 5, 6, 7, 8}


def test_build_tree_singleton():
    tree = build_tree(ParentAnnotation((-1,)))
    assert tree.roots == (0,)
    assert tree.nodes == (0,)
    assert tree.child_list(0) == ()


def test_build_tree_empty():
    tree = build_tree(ParentAnnotation(()))
    assert tree.roots == ()
    assert tree.nodes == ()


def test_build_tree_excludes_structural_positions():
    # "{ }" has no tree nodes at all
    tree = build_tree(tree_of("{ }"))
    assert tree.nodes == ()


# -- structural complexity -------------------------------------------------


def test_complexity_plain_chain_zero():
    assert sequence_complexity(tokenize_spaced("a + 1 = b", VOCAB)) == 0


def test_complexity_golden_one():
    assert sequence_complexity(tokenize_spaced(GOLDEN_TEXT, VOCAB)) == 1


def test_complexity_empty_zero():
    assert structural_complexity(build_tree(ParentAnnotation(()))) == 0


def test_complexity_lone_script_zero():
    # a base whose only child is the script argument never branches
    assert sequence_complexity(tokenize_spaced("x ^ { 2 }", VOCAB)) == 0


def test_complexity_frac_one():
    assert sequence_complexity(tokenize_spaced("\\frac { a } { b }", VOCAB)) == 1


def test_complexity_nested_fracs():
    text = "\\frac { \\frac { a } { b } } { c }"
    assert sequence_complexity(tokenize_spaced(text, VOCAB)) == 2


def test_complexity_deep_nesting_five():
    text = "\\frac { x } { 1 }"
    for _ in range(4):
        text = f"\\frac {{ {text} }} {{ 1 }}"
    assert sequence_complexity(tokenize_spaced(text, VOCAB)) == 5


def test_complexity_monotone_under_grafting():
    """Attaching a subtree as an extra child of an already-branching
    node never decreases complexity."""
    records = generate(GrammarConfig(seed=21), 60)
    for r in records:
        base = sequence_complexity(TokenSeq.from_tokens(r.tokens, VOCAB))
        # grafting: continue the baseline after a scripted head, which
        # adds a sibling child to the head node
        grafted = list(r.tokens) + ["+", "z"]
        ann = treeify_tokens(grafted)
        assert structural_complexity(build_tree(ann)) >= base


# -- brackets ---------------------------------------------------------------


def test_brackets_balanced_simple():
    assert brackets_balanced(tokenize_spaced("{ x }", VOCAB))


def test_brackets_unclosed():
    assert not brackets_balanced(tokenize_spaced("x ^ { 2", VOCAB))


def test_brackets_close_before_open():
    assert not brackets_balanced(TokenSeq.from_tokens(["}", "{"], VOCAB))


# -- generator-quantified invariants ----------------------------------------


def test_treeify_invariants_over_generator():
    records = generate(GrammarConfig(seed=31, allow_bare_groups=True), 200)
    for r in records:
        ann = treeify_tokens(list(r.tokens))
        for i, p in enumerate(ann.parents):
            assert p == NO_PARENT or p < i
            if classify(r.tokens[i]) is TokenClass.STRUCTURAL:
                assert p == NO_PARENT


def test_single_root_over_generator():
    records = generate(GrammarConfig(seed=32), 200)
    for r in records:
        assert len(r.tokens) > 0
        tree = build_tree(treeify_tokens(list(r.tokens)))
        assert len(tree.roots) == 1


def test_generator_output_always_balanced():
    records = generate(GrammarConfig(seed=33, allow_bare_groups=True), 200)
    for r in records:
        assert brackets_balanced(TokenSeq.from_tokens(r.tokens, VOCAB))
