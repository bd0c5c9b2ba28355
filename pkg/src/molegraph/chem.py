"""SMILES parsing and per-atom featurization.

Supports the organic subset plus bracket atoms over the ten elements the
models consume: B, C, N, O, P, S, F, Cl, Br, I (aromatic b, c, n, o, p, s).
Bond orders, stereo markers, and isotopes are parsed and then discarded:
downstream graph layers treat a molecule as plain undirected connectivity.
Hydrogens are always implicit (folded into the heavy atom, never nodes).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegreeOverflow,
    EmptyInput,
    SmilesSyntaxError,
    UnbalancedParentheses,
    UnmatchedRingClosure,
    UnsupportedElement,
)

ELEMENTS = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_SYMBOLS = ("b", "c", "n", "o", "p", "s")
MAX_DEGREE = 6
FEATURE_WIDTH = len(ELEMENTS) + (MAX_DEGREE + 1) + 1  # element + degree + aromatic

_TWO_LETTER = ("Cl", "Br")
_BOND_CHARS = "-=#:/\\"
_ELEMENT_INDEX = {sym: i for i, sym in enumerate(ELEMENTS)}


@dataclass
class Atom:
    element: str
    aromatic: bool = False
    formal_charge: int = 0
    explicit_h: int = 0


@dataclass
class MolGraph:
    """Atoms in SMILES order plus an undirected, connectivity-only bond set."""

    atoms: list
    bonds: set  # of (i, j) with i < j
    source_smiles: str = ""
    _neighbors: list = field(default=None, repr=False, compare=False)

    @property
    def n_atoms(self):
        return len(self.atoms)

    def neighbors(self, i):
        """Sorted neighbour indices of atom i."""
        if self._neighbors is None:
            nbrs = [[] for _ in self.atoms]
            for a, b in self.bonds:
                nbrs[a].append(b)
                nbrs[b].append(a)
            self._neighbors = [sorted(n) for n in nbrs]
        return self._neighbors[i]

    def degree(self, i):
        return len(self.neighbors(i))

    def degree_sequence(self):
        return sorted(self.degree(i) for i in range(self.n_atoms))


def sanitize_smiles(text):
    """Trim whitespace and, for multi-fragment SMILES, keep the largest fragment.

    Fragment size is the lexical atom count, so fragments containing elements
    we cannot parse (e.g. metal counterions) still count correctly and get
    discarded when a larger organic fragment is present.  Ties keep the first
    fragment.
    """
    text = text.strip()
    if not text:
        raise EmptyInput("empty SMILES")
    if "." not in text:
        return text
    fragments = text.split(".")
    best, best_count = None, -1
    for frag in fragments:
        count = _lexical_atom_count(frag)
        if count > best_count:
            best, best_count = frag, count
    return best


def _lexical_atom_count(fragment):
    """Count atom tokens without requiring the fragment to be parseable."""
    count = 0
    i, n = 0, len(fragment)
    while i < n:
        ch = fragment[i]
        if ch == "[":
            end = fragment.find("]", i)
            if end < 0:
                end = n - 1
            count += 1
            i = end + 1
        elif fragment[i : i + 2] in _TWO_LETTER:
            count += 1
            i += 2
        elif ch in "BCNOPSFI" or ch in AROMATIC_SYMBOLS:
            count += 1
            i += 1
        else:
            i += 1
    return count


def parse_smiles(text):
    """Parse a single-fragment SMILES string into a MolGraph.

    Atom order equals SMILES left-to-right order.  Raises a typed error with
    byte offset on malformed input; never returns a partial graph.
    """
    if not text or not text.strip():
        raise EmptyInput("empty SMILES")
    return _Parser(text).run()


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0
        self.atoms = []
        self.bonds = set()
        self.prev = None  # index of the atom the next bond attaches to
        self.branch_stack = []
        self.ring_open = {}  # ring number -> (atom index, offset of opening digit)

    def run(self):
        text, n = self.text, len(self.text)
        while self.pos < n:
            ch = text[self.pos]
            if ch == "(":
                if self.prev is None:
                    raise SmilesSyntaxError("branch before any atom", self.pos)
                self.branch_stack.append(self.prev)
                self.pos += 1
            elif ch == ")":
                if not self.branch_stack:
                    raise UnbalancedParentheses("unmatched ')'", self.pos)
                self.prev = self.branch_stack.pop()
                self.pos += 1
            elif ch in _BOND_CHARS:
                # bond order / stereo direction: recorded nowhere, graphs are
                # connectivity-only
                self.pos += 1
            elif ch.isdigit():
                self._ring_closure(int(ch), self.pos)
                self.pos += 1
            elif ch == "%":
                if self.pos + 2 >= n or not text[self.pos + 1 : self.pos + 3].isdigit():
                    raise SmilesSyntaxError("'%' needs two digits", self.pos)
                self._ring_closure(int(text[self.pos + 1 : self.pos + 3]), self.pos)
                self.pos += 3
            elif ch == "[":
                self._bracket_atom()
            elif ch == ".":
                raise SmilesSyntaxError(
                    "fragment separator inside parse input (sanitize first)", self.pos
                )
            else:
                self._organic_atom()
        if self.branch_stack:
            raise UnbalancedParentheses("unclosed '('", len(text) - 1)
        if self.ring_open:
            num, (_, offset) = next(iter(self.ring_open.items()))
            raise UnmatchedRingClosure(f"ring closure {num} never paired", offset)
        if not self.atoms:
            raise SmilesSyntaxError("no atoms", 0)
        graph = MolGraph(self.atoms, self.bonds, source_smiles=self.text)
        for i in range(graph.n_atoms):
            if graph.degree(i) > MAX_DEGREE:
                raise DegreeOverflow(
                    f"atom {i} in {self.text!r} has degree {graph.degree(i)} > {MAX_DEGREE}"
                )
        return graph

    def _add_atom(self, atom):
        idx = len(self.atoms)
        self.atoms.append(atom)
        if self.prev is not None:
            self._add_bond(self.prev, idx, self.pos)
        self.prev = idx

    def _add_bond(self, a, b, offset):
        if a == b:
            raise SmilesSyntaxError("self-loop bond", offset)
        key = (a, b) if a < b else (b, a)
        if key in self.bonds:
            raise SmilesSyntaxError(f"duplicate bond {key}", offset)
        self.bonds.add(key)

    def _ring_closure(self, number, offset):
        if self.prev is None:
            raise SmilesSyntaxError("ring closure before any atom", offset)
        if number in self.ring_open:
            other, _ = self.ring_open.pop(number)
            self._add_bond(other, self.prev, offset)
        else:
            self.ring_open[number] = (self.prev, offset)

    def _organic_atom(self):
        text, pos = self.text, self.pos
        two = text[pos : pos + 2]
        if two in _TWO_LETTER:
            self._add_atom(Atom(two))
            self.pos += 2
            return
        ch = text[pos]
        if ch in "BCNOPSFI":
            self._add_atom(Atom(ch))
            self.pos += 1
        elif ch in AROMATIC_SYMBOLS:
            self._add_atom(Atom(ch.upper(), aromatic=True))
            self.pos += 1
        elif ch.isalpha():
            raise UnsupportedElement(f"unsupported element {ch!r}", pos)
        else:
            raise SmilesSyntaxError(f"unexpected character {ch!r}", pos)

    def _bracket_atom(self):
        text = self.text
        start = self.pos
        end = text.find("]", start)
        if end < 0:
            raise SmilesSyntaxError("unterminated bracket atom", start)
        body = text[start + 1 : end]
        i, m = 0, len(body)

        while i < m and body[i].isdigit():  # isotope, discarded
            i += 1
        symbol, aromatic = None, False
        if body[i : i + 2] in _TWO_LETTER:
            symbol = body[i : i + 2]
            i += 2
        elif i < m and body[i] in "BCNOPSFI":
            symbol = body[i]
            i += 1
        elif i < m and body[i] in AROMATIC_SYMBOLS:
            symbol = body[i].upper()
            aromatic = True
            i += 1
        else:
            bad = body[i : i + 2].rstrip("]") or body
            raise UnsupportedElement(f"unsupported element {bad!r}", start + 1 + i)

        while i < m and body[i] == "@":  # chirality, discarded
            i += 1
        explicit_h = 0
        if i < m and body[i] == "H":
            i += 1
            digits = ""
            while i < m and body[i].isdigit():
                digits += body[i]
                i += 1
            explicit_h = int(digits) if digits else 1
        charge = 0
        if i < m and body[i] in "+-":
            sign = 1 if body[i] == "+" else -1
            i += 1
            digits = ""
            while i < m and body[i].isdigit():
                digits += body[i]
                i += 1
            if digits:
                charge = sign * int(digits)
            else:
                charge = sign
                while i < m and body[i] == body[i - 1]:  # ++ / -- style
                    charge += sign
                    i += 1
        if i != m:
            raise SmilesSyntaxError(f"bad bracket atom content {body!r}", start + 1 + i)
        if not -2 <= charge <= 2:
            raise SmilesSyntaxError(f"formal charge {charge} outside [-2, +2]", start)
        self._add_atom(Atom(symbol, aromatic=aromatic, formal_charge=charge, explicit_h=explicit_h))
        self.pos = end + 1


def featurize(graph):
    """Per-atom feature matrix, shape (n_atoms, FEATURE_WIDTH), float64.

    Layout: element one-hot (10) ++ degree one-hot 0..6 (7) ++ aromatic flag.
    """
    out = np.zeros((graph.n_atoms, FEATURE_WIDTH), dtype=np.float64)
    degree_base = len(ELEMENTS)
    aromatic_slot = FEATURE_WIDTH - 1
    for i, atom in enumerate(graph.atoms):
        out[i, _ELEMENT_INDEX[atom.element]] = 1.0
        out[i, degree_base + min(graph.degree(i), MAX_DEGREE)] = 1.0
        if atom.aromatic:
            out[i, aromatic_slot] = 1.0
    return out
