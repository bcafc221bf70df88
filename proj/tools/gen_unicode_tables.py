#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc: codepoint ranges whose general
category is a letter (L*) or number (N*)."""
import sys
import unicodedata

def main():
    ranges = []
    start = None
    for cp in range(0x110000):
        alnum = unicodedata.category(chr(cp))[0] in "LN"
        if alnum and start is None:
            start = cp
        elif not alnum and start is not None:
            ranges.append((start, cp - 1))
            start = None
    if start is not None:
        ranges.append((start, 0x10FFFF))
    out = sys.stdout
    out.write("// Generated by tools/gen_unicode_tables.py (Unicode %s). Do not edit.\n"
              % unicodedata.unidata_version)
    out.write("// Inclusive codepoint ranges with general category L* or N*.\n")
    out.write("inline constexpr CodepointRange kAlnumRanges[] = {\n")
    for lo, hi in ranges:
        out.write("    {0x%04X, 0x%04X},\n" % (lo, hi))
    out.write("};\n")

if __name__ == "__main__":
    main()
