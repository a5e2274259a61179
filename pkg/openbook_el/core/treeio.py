"""
Rooted phylogenetic trees in Newick format and their place on the 3-spider.

A rooted tree on three taxa either groups two of them in a cherry below an
internal edge, or is the star tree. The cherry picks the leg and the internal
edge length is the coordinate along it; star trees sit on the spine. Larger
trees are restricted to three chosen taxa first.

Trees are read and written with Bio.Phylo. Its reader skips characters it
cannot tokenize, so records pass a lexical check first that reports
positioned errors.
"""
import re
from collections import Counter
from dataclasses import dataclass, field
from io import StringIO
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple, Union

from Bio import Phylo
from Bio.Phylo.Newick import Clade, Tree
from Bio.Phylo.NewickIO import NewickError as PhyloNewickError

from openbook_el.core.geometry import BookPoint, BookShape, InvalidInputError, Sample
from openbook_el.util.logger import logger
from openbook_el.util.replicates import run_replicates

TOKEN = re.compile(r"\s+|\[[^\]]*\]?|'[^']*'?|[(),;]|:( ?)([^\s(),:;\[\]']*)|[^\s(),:;\[\]']+|.", re.S)
BRANCH_LENGTH = re.compile(r"[+-]?[0-9]*\.?[0-9]+(?:[eE][+-]?[0-9]+)?")


class NewickError(ValueError):
    """Malformed or unusable Newick input; position is a character offset when known"""

    def __init__(self, message: str, position: Optional[int] = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class NewickSyntaxError(NewickError):
    pass


class LeafCountError(NewickError):
    pass


class DuplicateTaxonError(NewickError):
    pass


class NegativeLengthError(NewickError):
    pass


class TaxaMismatchError(ValueError):
    """Tree taxa and leg assignment taxa differ"""


def check_newick(text: str):
    """
    Lexical check of one Newick record.

    Enforces balanced parentheses, a terminating ';' with nothing after it,
    closed comments and quotes, one label and one numeric branch length per
    node, and no commas outside parentheses.

    :raises NewickError: with the character offset of the first problem
    """
    depth = 0
    previous = None
    ended = False
    for match in TOKEN.finditer(text):
        token, position = match.group(), match.start()
        if token.isspace():
            continue
        if ended:
            raise NewickSyntaxError("Unexpected characters after ';'", position)
        first = token[0]
        if first == '[':
            if not token.endswith(']') or len(token) == 1:
                raise NewickSyntaxError("Unclosed comment", position)
            continue
        kind = first
        if first == '(':
            if previous not in (None, '(', ','):
                raise NewickSyntaxError("Unexpected '('", position)
            depth += 1
        elif first == ',':
            if depth == 0:
                raise NewickSyntaxError("',' outside parentheses", position)
        elif first == ')':
            if depth == 0:
                raise NewickSyntaxError("Unmatched ')'", position)
            depth -= 1
        elif first == ';':
            if depth > 0:
                raise NewickSyntaxError("Missing ')'", position)
            ended = True
        elif first == ':':
            if previous == 'length':
                raise NewickSyntaxError("Duplicate branch length", position)
            value = match.group(2)
            if not BRANCH_LENGTH.fullmatch(value):
                raise NewickSyntaxError(f"Invalid branch length '{value}'", match.start(2))
            if float(value) < 0:
                raise NegativeLengthError(f"Negative branch length {value}", match.start(2))
            kind = 'length'
        elif first == ']':
            raise NewickSyntaxError("Unexpected ']'", position)
        else:
            if first == "'" and (len(token) == 1 or not token.endswith("'")):
                raise NewickSyntaxError("Unclosed quoted label", position)
            if previous in ('label', 'length'):
                raise NewickSyntaxError("Unexpected label", position)
            kind = 'label'
        previous = kind
    if not ended:
        raise NewickSyntaxError("Missing ';'", len(text))


def parse_newick(text: Union[str, bytes]) -> Tree:
    """
    Parse one rooted Newick tree.

    Quoted labels, [comments], internal labels and optional branch lengths
    are accepted. Leaf names must be present and unique.

    :return: A rooted Bio.Phylo tree
    :raises NewickError: on any malformed input
    """
    if isinstance(text, bytes):
        text = text.decode('utf-8', errors='replace')
    text = text.replace('\r', ' ').replace('\n', ' ')
    check_newick(text)
    try:
        tree = Phylo.read(StringIO(text), 'newick', rooted=True)
        names = [leaf.name for leaf in tree.get_terminals()]
    except (PhyloNewickError, ValueError) as e:
        raise NewickSyntaxError(str(e))
    except RecursionError:
        raise NewickSyntaxError("Tree is nested too deeply")
    if any(not name for name in names):
        raise NewickSyntaxError("Leaf without a name")
    repeated = sorted(name for name, count in Counter(names).items() if count > 1)
    if repeated:
        raise DuplicateTaxonError(f"Duplicate taxon '{repeated[0]}'", text.find(repeated[0]))
    return tree


@dataclass(frozen=True)
class TriTree:
    """
    A rooted tree on three taxa.

    ``cherry`` is None for the star tree, which has internal length 0.
    """
    taxa: FrozenSet[str]
    cherry: Optional[FrozenSet[str]]
    internal_length: float
    leaf_lengths: Dict[str, float] = field(default_factory=dict, compare=True, hash=False)

    def __post_init__(self):
        object.__setattr__(self, 'taxa', frozenset(self.taxa))
        if self.cherry is not None:
            object.__setattr__(self, 'cherry', frozenset(self.cherry))
        if len(self.taxa) != 3:
            raise LeafCountError(f"A TriTree has exactly 3 taxa, got {len(self.taxa)}")
        if self.internal_length < 0:
            raise NegativeLengthError(f"Negative internal length {self.internal_length}")
        if self.cherry is None:
            if self.internal_length != 0:
                raise InvalidInputError("A star tree has internal length 0")
        elif len(self.cherry) != 2 or not self.cherry <= self.taxa:
            raise InvalidInputError(f"Cherry {sorted(self.cherry)} is not a pair of {sorted(self.taxa)}")
        elif self.internal_length <= 0:
            raise InvalidInputError("A resolved tree needs a positive internal length")

    @property
    def is_star(self) -> bool:
        return self.cherry is None

    @property
    def outgroup(self) -> Optional[str]:
        if self.cherry is None:
            return None
        return next(iter(self.taxa - self.cherry))


def _missing_lengths(upper: Clade, lower: Clade) -> bool:
    """Whether a branch on the path from upper down to lower has no length"""
    return any(clade.branch_length is None for clade in upper.get_path(lower))


def induce_tritree(tree: Tree, taxa: Iterable[str]) -> TriTree:
    """
    Restrict a rooted tree to three taxa.

    The cherry is the pair whose common ancestor lies strictly below the
    common ancestor of all three; its internal length is the path length
    between those two ancestors. A zero-length path gives the star tree.
    """
    taxa = sorted(set(taxa))
    if len(taxa) != 3:
        raise LeafCountError(f"Need exactly 3 taxa, got {len(taxa)}")
    try:
        by_name = {leaf.name: leaf for leaf in tree.get_terminals()}
        absent = [name for name in taxa if name not in by_name]
        if absent:
            raise TaxaMismatchError(f"Tree lacks taxa {absent}")
        leaves = [by_name[name] for name in taxa]
        top = tree.common_ancestor(leaves)

        cherry = None
        internal = 0.0
        missing = False
        attach = {name: top for name in taxa}
        for i, j, k in ((0, 1, 2), (0, 2, 1), (1, 2, 0)):
            join = tree.common_ancestor(leaves[i], leaves[j])
            if join is not top:
                cherry = frozenset((taxa[i], taxa[j]))
                internal = tree.distance(join, top)
                missing = _missing_lengths(top, join)
                attach = {taxa[i]: join, taxa[j]: join, taxa[k]: top}
                break

        leaf_lengths = {}
        for name, leaf in zip(taxa, leaves):
            leaf_lengths[name] = tree.distance(leaf, attach[name])
            missing = missing or _missing_lengths(attach[name], leaf)
    except RecursionError:
        raise NewickSyntaxError("Tree is nested too deeply")
    if missing:
        logger.warning(f"Tree on {taxa} has missing branch lengths; they count as 0")
    if internal == 0.0:
        cherry = None
    return TriTree(frozenset(taxa), cherry, float(internal), {k: float(v) for k, v in leaf_lengths.items()})


def parse_newick_tritree(text: Union[str, bytes]) -> TriTree:
    """Parse a Newick tree with exactly three leaves"""
    tree = parse_newick(text)
    names = [leaf.name for leaf in tree.get_terminals()]
    if len(names) != 3:
        raise LeafCountError(f"Expected 3 leaves, found {len(names)}")
    return induce_tritree(tree, names)


def emit_newick(tree: TriTree) -> str:
    """Newick text of a TriTree; taxa are written in sorted order and lengths exactly"""
    def leaf(name: str) -> Clade:
        return Clade(branch_length=tree.leaf_lengths.get(name, 0.0), name=name)

    if tree.cherry is None:
        root = Clade(clades=[leaf(name) for name in sorted(tree.taxa)])
    else:
        pair = Clade(branch_length=tree.internal_length, clades=[leaf(name) for name in sorted(tree.cherry)])
        root = Clade(clades=[pair, leaf(tree.outgroup)])
    handle = StringIO()
    Phylo.write(Tree(root=root, rooted=True), handle, 'newick', format_branch_length='%r')
    return handle.getvalue().strip()


@dataclass(frozen=True)
class LegAssignment:
    """Bijection from the three cherries of a taxa triple to legs 1..3"""
    taxa: Tuple[str, str, str]
    cherries: Tuple[FrozenSet[str], FrozenSet[str], FrozenSet[str]]

    def __post_init__(self):
        taxa = tuple(self.taxa)
        cherries = tuple(frozenset(c) for c in self.cherries)
        if len(set(taxa)) != 3 or len(taxa) != 3:
            raise TaxaMismatchError(f"A leg assignment needs 3 distinct taxa, got {list(taxa)}")
        pairs = {frozenset(p) for p in ((taxa[0], taxa[1]), (taxa[0], taxa[2]), (taxa[1], taxa[2]))}
        if len(cherries) != 3 or set(cherries) != pairs:
            raise TaxaMismatchError(
                f"Cherries {[sorted(c) for c in cherries]} are not the three pairs of {list(taxa)}")
        object.__setattr__(self, 'taxa', taxa)
        object.__setattr__(self, 'cherries', cherries)

    @classmethod
    def default(cls, taxa: Iterable[str]) -> 'LegAssignment':
        """Lexicographic order: {t1,t2} -> leg 1, {t1,t3} -> leg 2, {t2,t3} -> leg 3"""
        t = tuple(sorted(set(taxa)))
        if len(t) != 3:
            raise TaxaMismatchError(f"A leg assignment needs 3 distinct taxa, got {list(t)}")
        return cls(t, (frozenset((t[0], t[1])), frozenset((t[0], t[2])), frozenset((t[1], t[2]))))

    @classmethod
    def from_cherries(cls, cherries: Sequence[Sequence[str]]) -> 'LegAssignment':
        """Assignment from an explicit cherry order, leg k taking cherries[k-1]"""
        if len(cherries) != 3 or any(len(set(pair)) != 2 for pair in cherries):
            raise TaxaMismatchError(f"Expected three pairs of taxa, got {cherries}")
        taxa = tuple(sorted({name for pair in cherries for name in pair}))
        return cls(taxa, tuple(frozenset(pair) for pair in cherries))

    def leg_of(self, cherry: FrozenSet[str]) -> int:
        try:
            return self.cherries.index(frozenset(cherry)) + 1
        except ValueError:
            raise TaxaMismatchError(f"Cherry {sorted(cherry)} is not a pair of {list(self.taxa)}")

    def to_dict(self) -> dict:
        return {'taxa': list(self.taxa), 'leg_order': [sorted(c) for c in self.cherries]}


def tritree_to_spider(tree: TriTree, assignment: LegAssignment) -> BookPoint:
    """Leg of the cherry at the internal length, or the spine for the star tree"""
    if tree.taxa != frozenset(assignment.taxa):
        raise TaxaMismatchError(f"Tree taxa {sorted(tree.taxa)} differ from {list(assignment.taxa)}")
    if tree.cherry is None:
        return BookPoint.spine()
    return BookPoint.on_page(assignment.leg_of(tree.cherry), tree.internal_length)


def split_records(text: str) -> List[str]:
    """Split file contents into Newick records, one per ';'"""
    return [record.strip() + ';' for record in text.split(';') if record.strip()]


@dataclass
class CorpusResult:
    """Points ingested from a corpus with the records that were skipped"""
    sample: Optional[Sample]
    trees: List[Tuple[str, int, TriTree]]
    skipped: List[dict]

    def skip_report(self) -> dict:
        return {'used': len(self.trees), 'skipped': self.skipped}


def _ingest_file(path: Path, taxa: List[str], assignment: LegAssignment) -> Tuple[list, list]:
    points, skipped = [], []
    try:
        text = path.read_text(encoding='utf-8', errors='replace')
    except OSError as e:
        return points, [{'path': str(path), 'record': None, 'reason': f"unreadable: {e}"}]
    records = split_records(text)
    if not records:
        return points, [{'path': str(path), 'record': None, 'reason': 'no records'}]
    for index, record in enumerate(records):
        try:
            tree = parse_newick(record)
            names = {leaf.name for leaf in tree.get_terminals()}
            absent = [name for name in taxa if name not in names]
            if absent:
                skipped.append({'path': str(path), 'record': index, 'reason': f"missing taxa {absent}"})
                continue
            induced = induce_tritree(tree, taxa)
            points.append((str(path), index, induced, tritree_to_spider(induced, assignment)))
        except (NewickError, TaxaMismatchError) as e:
            skipped.append({'path': str(path), 'record': index, 'reason': str(e)})
    return points, skipped


def ingest_corpus(paths: Sequence[Union[str, Path]], taxa: Iterable[str],
                  assignment: Optional[LegAssignment] = None, workers: int = 1) -> CorpusResult:
    """
    Map every tree of a corpus that contains the three taxa onto the 3-spider.

    Problems with single files or records are reported in ``skipped`` and
    never abort the batch. Points keep the input file and record order.
    """
    taxa = sorted(set(taxa))
    if len(taxa) != 3:
        raise TaxaMismatchError(f"The taxa filter needs 3 distinct names, got {taxa}")
    assignment = assignment or LegAssignment.default(taxa)
    if sorted(assignment.taxa) != taxa:
        raise TaxaMismatchError(f"Leg assignment taxa {list(assignment.taxa)} differ from the filter {taxa}")
    paths = [Path(p) for p in paths]

    results = run_replicates(lambda index: _ingest_file(paths[index], taxa, assignment), len(paths), workers)
    points, skipped = [], []
    for file_points, file_skipped in results:
        points.extend(file_points)
        skipped.extend(file_skipped)
    for entry in skipped:
        logger.warning(f"Skipped {entry['path']}"
                       + (f" record {entry['record']}" if entry['record'] is not None else "")
                       + f": {entry['reason']}")

    sample = None
    if points:
        sample = Sample.from_points(BookShape(pages=3, dim=1), [p for _, _, _, p in points])
    logger.info(f"Ingested {len(points)} trees from {len(paths)} files, skipped {len(skipped)}")
    return CorpusResult(sample=sample, trees=[(path, index, tree) for path, index, tree, _ in points],
                        skipped=skipped)
